use ndarray::{Array4, Axis, Zip};

use super::{join, Conv2d, Module, ParamMuts, ParamRefs};
use crate::rng::Rng;
use crate::scalar::Scalar;

pub struct LeakyRelu<T> {
    slope: T,
    input: Option<Array4<T>>,
}

impl<T: Scalar> LeakyRelu<T> {
    pub fn new(slope: f64) -> Self {
        LeakyRelu {
            slope: T::of(slope),
            input: None,
        }
    }

    fn apply(&self, v: T) -> T {
        if v >= T::zero() {
            v
        } else {
            v * self.slope
        }
    }
}

impl<T: Scalar> Default for LeakyRelu<T> {
    fn default() -> Self {
        Self::new(0.1)
    }
}

impl<T: Scalar> Module<T> for LeakyRelu<T> {
    fn forward(&mut self, x: &Array4<T>) -> Array4<T> {
        self.input = Some(x.clone());
        self.infer(x)
    }

    fn infer(&self, x: &Array4<T>) -> Array4<T> {
        x.mapv(|v| self.apply(v))
    }

    fn backward(&mut self, grad: &Array4<T>) -> Array4<T> {
        let x = self.input.take().expect("backward without forward");
        let mut g = grad.clone();
        Zip::from(&mut g).and(&x).for_each(|g, &x| {
            if x < T::zero() {
                *g *= self.slope;
            }
        });
        g
    }
}

#[derive(Default)]
pub struct Sigmoid<T> {
    output: Option<Array4<T>>,
}

impl<T: Scalar> Sigmoid<T> {
    pub fn new() -> Self {
        Sigmoid { output: None }
    }
}

impl<T: Scalar> Module<T> for Sigmoid<T> {
    fn forward(&mut self, x: &Array4<T>) -> Array4<T> {
        let y = self.infer(x);
        self.output = Some(y.clone());
        y
    }

    fn infer(&self, x: &Array4<T>) -> Array4<T> {
        x.mapv(Scalar::sigmoid)
    }

    fn backward(&mut self, grad: &Array4<T>) -> Array4<T> {
        let y = self.output.take().expect("backward without forward");
        let mut g = grad.clone();
        Zip::from(&mut g)
            .and(&y)
            .for_each(|g, &y| *g *= y * (T::one() - y));
        g
    }
}

/// Depth-to-space upsampling: `(N, C r^2, H, W) -> (N, C, H r, W r)`.
pub struct PixelShuffle {
    factor: usize,
}

impl PixelShuffle {
    pub fn new(factor: usize) -> Self {
        PixelShuffle { factor }
    }
}

impl<T: Scalar> Module<T> for PixelShuffle {
    fn forward(&mut self, x: &Array4<T>) -> Array4<T> {
        self.infer(x)
    }

    fn infer(&self, x: &Array4<T>) -> Array4<T> {
        let r = self.factor;
        let (n, c, h, w) = x.dim();
        assert_eq!(c % (r * r), 0, "pixel shuffle channel count");
        let co = c / (r * r);
        Array4::from_shape_fn((n, co, h * r, w * r), |(b, o, y, xx)| {
            x[[b, o * r * r + (y % r) * r + xx % r, y / r, xx / r]]
        })
    }

    fn backward(&mut self, grad: &Array4<T>) -> Array4<T> {
        let r = self.factor;
        let (n, co, hr, wr) = grad.dim();
        Array4::from_shape_fn((n, co * r * r, hr / r, wr / r), |(b, c, y, xx)| {
            let o = c / (r * r);
            let i = (c % (r * r)) / r;
            let j = c % r;
            grad[[b, o, y * r + i, xx * r + j]]
        })
    }
}

/// `act(x + conv(act(conv(x))))` with 3x3 convolutions at constant width.
pub struct ResBlock<T> {
    conv1: Conv2d<T>,
    act1: LeakyRelu<T>,
    conv2: Conv2d<T>,
    act_out: LeakyRelu<T>,
}

impl<T: Scalar> ResBlock<T> {
    pub fn new(channels: usize, rng: &mut Rng) -> Self {
        ResBlock {
            conv1: Conv2d::new(channels, channels, 3, 1, rng),
            act1: LeakyRelu::default(),
            conv2: Conv2d::new(channels, channels, 3, 1, rng),
            act_out: LeakyRelu::default(),
        }
    }
}

impl<T: Scalar> Module<T> for ResBlock<T> {
    fn forward(&mut self, x: &Array4<T>) -> Array4<T> {
        let h = self.conv1.forward(x);
        let h = self.act1.forward(&h);
        let h = self.conv2.forward(&h);
        self.act_out.forward(&(h + x))
    }

    fn infer(&self, x: &Array4<T>) -> Array4<T> {
        let h = self.conv1.infer(x);
        let h = self.act1.infer(&h);
        let h = self.conv2.infer(&h);
        self.act_out.infer(&(h + x))
    }

    fn backward(&mut self, grad: &Array4<T>) -> Array4<T> {
        let g = self.act_out.backward(grad);
        let h = self.conv2.backward(&g);
        let h = self.act1.backward(&h);
        let h = self.conv1.backward(&h);
        g + h
    }

    fn params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a, T>) {
        self.conv1.params(&join(prefix, "conv1"), out);
        self.conv2.params(&join(prefix, "conv2"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a, T>) {
        self.conv1.params_mut(&join(prefix, "conv1"), out);
        self.conv2.params_mut(&join(prefix, "conv2"), out);
    }
}

#[derive(Default)]
pub struct Sequential<T> {
    layers: Vec<Box<dyn Module<T>>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new() -> Self {
        Sequential { layers: Vec::new() }
    }

    pub fn push(mut self, layer: impl Module<T> + 'static) -> Self {
        self.layers.push(Box::new(layer));
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

impl<T: Scalar> Module<T> for Sequential<T> {
    fn forward(&mut self, x: &Array4<T>) -> Array4<T> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward(&h);
        }
        h
    }

    fn infer(&self, x: &Array4<T>) -> Array4<T> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.infer(&h);
        }
        h
    }

    fn backward(&mut self, grad: &Array4<T>) -> Array4<T> {
        let mut g = grad.clone();
        for l in self.layers.iter_mut().rev() {
            g = l.backward(&g);
        }
        g
    }

    fn params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a, T>) {
        for (i, l) in self.layers.iter().enumerate() {
            l.params(&join(prefix, &i.to_string()), out);
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a, T>) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.params_mut(&join(prefix, &i.to_string()), out);
        }
    }
}

/// Per-sample power normalization: each sample's `C*H*W` reals are read as
/// `k = C*H*W/2` interleaved complex symbols and scaled to unit average
/// power. An all-zero sample passes through as zeros.
#[derive(Default)]
pub struct PowerNorm<T> {
    cache: Option<(Array4<T>, Vec<T>)>,
}

impl<T: Scalar> PowerNorm<T> {
    pub fn new() -> Self {
        PowerNorm { cache: None }
    }

    fn norms(x: &Array4<T>) -> Vec<T> {
        x.axis_iter(Axis(0))
            .map(|s| s.iter().map(|&v| v * v).sum::<T>().sqrt())
            .collect()
    }
}

impl<T: Scalar> Module<T> for PowerNorm<T> {
    fn forward(&mut self, x: &Array4<T>) -> Array4<T> {
        let y = self.infer(x);
        self.cache = Some((x.clone(), Self::norms(x)));
        y
    }

    fn infer(&self, x: &Array4<T>) -> Array4<T> {
        let mut y = x.clone();
        let half = T::of((x.len() / x.dim().0) as f64 / 2.0);
        for (mut s, norm) in y.axis_iter_mut(Axis(0)).zip(Self::norms(x)) {
            if norm > T::zero() {
                let gain = half.sqrt() / norm;
                s.mapv_inplace(|v| v * gain);
            }
        }
        y
    }

    fn backward(&mut self, grad: &Array4<T>) -> Array4<T> {
        let (x, norms) = self.cache.take().expect("backward without forward");
        let half = T::of((x.len() / x.dim().0) as f64 / 2.0);
        let mut dx = Array4::zeros(x.raw_dim());
        for (i, norm) in norms.into_iter().enumerate() {
            if norm <= T::zero() {
                continue;
            }
            let xs = x.index_axis(Axis(0), i);
            let gs = grad.index_axis(Axis(0), i);
            let dot: T = xs.iter().zip(gs.iter()).map(|(&a, &b)| a * b).sum();
            let scale = half.sqrt() / norm;
            let proj = dot / (norm * norm);
            Zip::from(dx.index_axis_mut(Axis(0), i))
                .and(&xs)
                .and(&gs)
                .for_each(|d, &xv, &gv| *d = scale * (gv - xv * proj));
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamId};
    use rand::Rng as _;

    fn rand4(dims: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
        let mut rng = stream(seed, StreamId::aux(0));
        Array4::from_shape_fn(dims, |_| rng.gen_range(-1.0..1.0))
    }

    fn check_input_grad<M: Module<f64>>(m: &mut M, x: &Array4<f64>) {
        // loss = sum(w . y) with fixed random weights w
        let y = m.forward(x);
        let w = rand4(y.dim(), 99);
        let dx = m.backward(&w);
        let eps = 1e-6;
        let n = x.len();
        for idx in (0..n).step_by((n / 12).max(1)) {
            let mut xp = x.clone();
            xp.as_slice_mut().unwrap()[idx] += eps;
            let mut xm = x.clone();
            xm.as_slice_mut().unwrap()[idx] -= eps;
            let lp = (&m.infer(&xp) * &w).sum();
            let lm = (&m.infer(&xm) * &w).sum();
            let num = (lp - lm) / (2.0 * eps);
            let a = dx.as_slice().unwrap()[idx];
            assert!((a - num).abs() < 1e-6 * (1.0 + num.abs()), "idx {idx}: {a} vs {num}");
        }
    }

    #[test]
    fn pixel_shuffle_layout_and_inverse() {
        let x = Array4::from_shape_fn((1, 4, 1, 1), |(_, c, _, _)| c as f64);
        let mut ps = PixelShuffle::new(2);
        let y = Module::<f64>::infer(&ps, &x);
        assert_eq!(y.dim(), (1, 1, 2, 2));
        assert_eq!(y.as_slice().unwrap(), &[0.0, 1.0, 2.0, 3.0]);
        let x = rand4((2, 8, 3, 2), 4);
        let y = ps.forward(&x);
        assert_eq!(ps.backward(&y), x);
    }

    #[test]
    fn layer_input_gradients() {
        let mut rng = stream(3, StreamId::init(0));
        check_input_grad(&mut LeakyRelu::new(0.1), &rand4((2, 3, 4, 4), 1));
        check_input_grad(&mut Sigmoid::new(), &rand4((2, 3, 4, 4), 2));
        check_input_grad(&mut ResBlock::new(3, &mut rng), &rand4((1, 3, 4, 4), 3));
        check_input_grad(&mut PowerNorm::new(), &rand4((3, 2, 2, 3), 4));
    }

    #[test]
    fn power_norm_output_has_unit_power() {
        let x = rand4((4, 6, 2, 2), 8) * 17.0;
        let y = PowerNorm::new().infer(&x);
        for s in y.axis_iter(Axis(0)) {
            let p = s.iter().map(|v| v * v).sum::<f64>() / (s.len() / 2) as f64;
            assert!((p - 1.0).abs() < 1e-12);
        }
        let z = PowerNorm::new().infer(&Array4::<f64>::zeros((1, 2, 2, 2)));
        assert!(z.iter().all(|v| *v == 0.0));
    }
}
