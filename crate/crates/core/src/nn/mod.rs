//! Minimal layer library with explicit backward passes.
//!
//! Tensors are `N x C x H x W` arrays. `forward` caches whatever `backward`
//! needs and `backward` accumulates parameter gradients into [`Param::grad`]
//! and returns the gradient with respect to the layer input. `infer` is the
//! cache-free path used at deployment.

mod adam;
mod conv;
mod layers;

pub use adam::{Adam, AdamConfig};
pub use conv::Conv2d;
pub use layers::{LeakyRelu, PixelShuffle, PowerNorm, ResBlock, Sequential, Sigmoid};

use ndarray::{Array4, ArrayD};

use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub value: ArrayD<T>,
    pub grad: ArrayD<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: ArrayD<T>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

pub type ParamRefs<'a, T> = Vec<(String, &'a Param<T>)>;
pub type ParamMuts<'a, T> = Vec<(String, &'a mut Param<T>)>;

pub trait Module<T: Scalar>: Send {
    fn forward(&mut self, x: &Array4<T>) -> Array4<T>;

    fn backward(&mut self, grad: &Array4<T>) -> Array4<T>;

    fn infer(&self, x: &Array4<T>) -> Array4<T>;

    fn params<'a>(&'a self, _prefix: &str, _out: &mut ParamRefs<'a, T>) {}

    fn params_mut<'a>(&'a mut self, _prefix: &str, _out: &mut ParamMuts<'a, T>) {}
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Anything that owns named parameters: whole models, sub-networks and
/// entropy models. Names are stable and used as checkpoint keys.
pub trait HasParams<T: Scalar> {
    fn collect_params<'a>(&'a self, out: &mut ParamRefs<'a, T>);

    fn collect_params_mut<'a>(&'a mut self, out: &mut ParamMuts<'a, T>);

    fn zero_grad(&mut self) {
        let mut ps = Vec::new();
        self.collect_params_mut(&mut ps);
        ps.into_iter().for_each(|(_, p)| p.zero_grad());
    }

    fn param_count(&self) -> usize {
        let mut ps = Vec::new();
        self.collect_params(&mut ps);
        ps.iter().map(|(_, p)| p.len()).sum()
    }
}

/// Scalar summaries of one batch. `loss` is what the optimizer minimizes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub loss: f64,
    /// Mean squared error per pixel value on the `[0, 1]` scale.
    pub mse: f64,
    /// Estimated bits per pixel (zero for purely analog models).
    pub bpp: f64,
}

impl LossTerms {
    pub fn distortion_only(mse: f64) -> Self {
        LossTerms { loss: mse, mse, bpp: 0.0 }
    }
}

/// Models driven by the generic training loop.
pub trait Trainable<T: Scalar>: HasParams<T> {
    /// Forward and backward pass; accumulates gradients into the parameters.
    fn train_batch(&mut self, batch: &Array4<T>, rng: &mut crate::rng::Rng) -> LossTerms;

    /// Loss on a batch without touching gradients.
    fn eval_batch(&self, batch: &Array4<T>, rng: &mut crate::rng::Rng) -> LossTerms;
}

pub mod gradcheck {
    //! Central finite-difference checks of analytic parameter gradients.

    use super::*;

    /// Compare analytic parameter gradients of `loss` against central
    /// differences on up to `per_param` entries of every parameter.
    /// Returns the worst relative error observed.
    pub fn check_param_grads<M, F>(model: &mut M, loss: F, per_param: usize, eps: f64) -> f64
    where
        M: HasParams<f64>,
        F: Fn(&mut M, bool) -> f64,
    {
        model.zero_grad();
        loss(model, true);
        let mut analytic = Vec::new();
        {
            let mut ps = Vec::new();
            model.collect_params_mut(&mut ps);
            for (name, p) in ps {
                analytic.push((name, p.grad.clone()));
            }
        }
        let mut worst: f64 = 0.0;
        for (pi, (name, grad)) in analytic.iter().enumerate() {
            let n = grad.len();
            let step = (n / per_param).max(1);
            // entries far below the tensor's largest gradient are dominated by
            // finite-difference roundoff; judge them against that scale
            let floor = grad.iter().fold(1e-6f64, |m, g| m.max(1e-2 * g.abs()));
            for idx in (0..n).step_by(step).take(per_param) {
                let a = grad.as_slice().unwrap()[idx];
                // a LeakyReLU kink inside one stencil spoils that estimate;
                // the entry passes if either step size agrees
                let rel = [eps, 0.2 * eps]
                    .iter()
                    .map(|&h| {
                        let numeric = central_difference(model, &loss, pi, idx, h);
                        let denom = a.abs().max(numeric.abs()).max(floor);
                        ((a - numeric).abs() / denom, numeric)
                    })
                    .min_by(|x, y| x.0.total_cmp(&y.0))
                    .unwrap();
                if rel.0 > worst {
                    worst = rel.0;
                }
                if rel.0 > 1e-3 {
                    log::debug!("{name}[{idx}]: analytic {a:e} numeric {:e}", rel.1);
                }
            }
        }
        worst
    }

    fn central_difference<M, F>(model: &mut M, loss: &F, pi: usize, idx: usize, h: f64) -> f64
    where
        M: HasParams<f64>,
        F: Fn(&mut M, bool) -> f64,
    {
        let orig = {
            let mut ps = Vec::new();
            model.collect_params_mut(&mut ps);
            ps[pi].1.value.as_slice().unwrap()[idx]
        };
        set(model, pi, idx, orig + h);
        let up = loss(model, false);
        set(model, pi, idx, orig - h);
        let down = loss(model, false);
        set(model, pi, idx, orig);
        (up - down) / (2.0 * h)
    }

    fn set<M: HasParams<f64>>(model: &mut M, pi: usize, idx: usize, v: f64) {
        let mut ps = Vec::new();
        model.collect_params_mut(&mut ps);
        ps[pi].1.value.as_slice_mut().unwrap()[idx] = v;
    }
}
