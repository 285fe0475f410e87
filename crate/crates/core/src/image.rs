use ndarray::{Array3, Array4, ArrayView3, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A `C x H x W` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<T>(pub Array3<T>);

impl<T: Scalar> ImageTensor<T> {
    pub fn new(data: Array3<T>) -> Result<Self> {
        if data.iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
            return Err(Error::InvalidArgument(
                "image values must lie in [0, 1]".into(),
            ));
        }
        Ok(ImageTensor(data))
    }

    /// Wrap without the range check; values are clamped.
    pub fn clamped(mut data: Array3<T>) -> Self {
        data.mapv_inplace(|v| v.max(T::zero()).min(T::one()));
        ImageTensor(data)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.0.dim()
    }

    pub fn view(&self) -> ArrayView3<'_, T> {
        self.0.view()
    }

    pub fn into_batch(self) -> Array4<T> {
        self.0.insert_axis(Axis(0))
    }

    pub fn from_batch(batch: &Array4<T>, index: usize) -> Self {
        ImageTensor::clamped(batch.index_axis(Axis(0), index).to_owned())
    }

    pub fn cast<U: Scalar>(&self) -> ImageTensor<U> {
        ImageTensor(self.0.mapv(|v| U::of(v.as_f64())))
    }
}

/// Stack images into an `N x C x H x W` batch.
pub fn stack<T: Scalar>(images: &[ImageTensor<T>]) -> Result<Array4<T>> {
    let views: Vec<_> = images.iter().map(|i| i.0.view()).collect();
    ndarray::stack(Axis(0), &views).map_err(|e| Error::shape(e.to_string()))
}

/// Mean squared error per element.
pub fn mse<T: Scalar>(a: ArrayView3<'_, T>, b: ArrayView3<'_, T>) -> f64 {
    let n = a.len() as f64;
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x.as_f64() - y.as_f64()).powi(2))
        .sum::<f64>()
        / n
}
