use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Array4, ArrayView2, Axis, IxDyn};
use rand::Rng as _;

use super::{join, Module, Param, ParamMuts, ParamRefs};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// 2-D convolution with square kernels, zero padding and integer stride.
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    input: Option<Array4<T>>,
}

impl<T: Scalar> Conv2d<T> {
    /// `padding = kernel / 2`, PyTorch-style uniform init with bound
    /// `1 / sqrt(fan_in)`.
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, rng: &mut Rng) -> Self {
        let fan_in = (in_ch * kernel * kernel) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let w: Vec<T> = (0..out_ch * in_ch * kernel * kernel)
            .map(|_| T::of(rng.gen_range(-bound..bound)))
            .collect();
        let b: Vec<T> = (0..out_ch).map(|_| T::of(rng.gen_range(-bound..bound))).collect();
        Conv2d {
            weight: Param::new(
                ndarray::ArrayD::from_shape_vec(IxDyn(&[out_ch, in_ch, kernel, kernel]), w)
                    .expect("weight shape"),
            ),
            bias: Param::new(ndarray::ArrayD::from_shape_vec(IxDyn(&[out_ch]), b).expect("bias")),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad: kernel / 2,
            input: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_ch
    }

    pub fn out_channels(&self) -> usize {
        self.out_ch
    }

    fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    fn weight_matrix(&self) -> ArrayView2<'_, T> {
        self.weight
            .value
            .view()
            .into_shape_with_order((self.out_ch, self.in_ch * self.kernel * self.kernel))
            .expect("contiguous weight")
    }

    fn im2col(&self, x: &Array4<T>, n: usize, oh: usize, ow: usize) -> Array2<T> {
        let (_, c, h, w) = x.dim();
        let k = self.kernel;
        let mut cols = Array2::<T>::zeros((c * k * k, oh * ow));
        let img = x.index_axis(Axis(0), n);
        let img = img.as_standard_layout();
        let src = img.as_slice().expect("standard layout");
        let dst = cols.as_slice_mut().expect("fresh array");
        let ohw = oh * ow;
        for ci in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    let out = &mut dst[row * ohw..(row + 1) * ohw];
                    for y in 0..oh {
                        let iy = (y * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let base = (ci * h + iy as usize) * w;
                        for xo in 0..ow {
                            let ix = (xo * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                out[y * ow + xo] = src[base + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &Array2<T>, dst: &mut [T], h: usize, w: usize, oh: usize, ow: usize) {
        let k = self.kernel;
        let ohw = oh * ow;
        let src = cols.as_slice().expect("standard layout");
        for ci in 0..self.in_ch {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    let col = &src[row * ohw..(row + 1) * ohw];
                    for y in 0..oh {
                        let iy = (y * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let base = (ci * h + iy as usize) * w;
                        for xo in 0..ow {
                            let ix = (xo * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[base + ix as usize] += col[y * ow + xo];
                            }
                        }
                    }
                }
            }
        }
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn forward(&mut self, x: &Array4<T>) -> Array4<T> {
        let y = self.infer(x);
        self.input = Some(x.clone());
        y
    }

    fn infer(&self, x: &Array4<T>) -> Array4<T> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_ch, "conv input channels");
        let (oh, ow) = self.out_hw(h, w);
        let wm = self.weight_matrix();
        let bias = self.bias.value.as_slice().expect("bias");
        let mut y = Array4::<T>::zeros((n, self.out_ch, oh, ow));
        for i in 0..n {
            let cols = self.im2col(x, i, oh, ow);
            let mut out = Array2::<T>::zeros((self.out_ch, oh * ow));
            for (o, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
                row.fill(bias[o]);
            }
            general_mat_mul(T::one(), &wm, &cols, T::one(), &mut out);
            y.slice_mut(s![i, .., .., ..])
                .assign(&out.into_shape_with_order((self.out_ch, oh, ow)).expect("reshape"));
        }
        y
    }

    fn backward(&mut self, grad: &Array4<T>) -> Array4<T> {
        let x = self.input.take().expect("conv backward without forward");
        let (n, c, h, w) = x.dim();
        let (oh, ow) = self.out_hw(h, w);
        let ckk = c * self.kernel * self.kernel;
        let mut dx = Array4::<T>::zeros((n, c, h, w));
        let mut dw = Array2::<T>::zeros((self.out_ch, ckk));
        let mut db = vec![T::zero(); self.out_ch];
        for i in 0..n {
            let cols = self.im2col(&x, i, oh, ow);
            let g = grad.index_axis(Axis(0), i);
            let g = g
                .as_standard_layout()
                .into_owned()
                .into_shape_with_order((self.out_ch, oh * ow))
                .expect("grad reshape");
            for (o, row) in g.axis_iter(Axis(0)).enumerate() {
                db[o] += row.sum();
            }
            general_mat_mul(T::one(), &g, &cols.t(), T::one(), &mut dw);
            let mut dcols = Array2::<T>::zeros((ckk, oh * ow));
            general_mat_mul(T::one(), &self.weight_matrix().t(), &g, T::zero(), &mut dcols);
            let mut slot = dx.index_axis_mut(Axis(0), i);
            let dst = slot.as_slice_mut().expect("fresh array");
            self.col2im(&dcols, dst, h, w, oh, ow);
        }
        let wg = self.weight.grad.as_slice_mut().expect("grad");
        for (a, b) in wg.iter_mut().zip(dw.iter()) {
            *a += *b;
        }
        let bg = self.bias.grad.as_slice_mut().expect("grad");
        for (a, b) in bg.iter_mut().zip(db) {
            *a += b;
        }
        dx
    }

    fn params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a, T>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a, T>) {
        out.push((join(prefix, "weight"), &mut self.weight));
        out.push((join(prefix, "bias"), &mut self.bias));
    }
}
