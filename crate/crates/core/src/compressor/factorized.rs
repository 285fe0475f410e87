//! Per-channel learned univariate density for the hyper-latent `v`.
//!
//! Each channel owns a monotone map `L: R -> R` built from four small dense
//! layers with positive weights (`softplus` of free parameters) and gated
//! `tanh` nonlinearities; the cumulative function is `F = sigmoid(L)`.

use ndarray::{Array4, ArrayD, IxDyn};
use rand::Rng as _;

use super::likelihood::{neg_log2_grad, P_MIN};
use crate::entropy::{CdfTable, SymbolRange, MAX_TABLE_SYMBOLS};
use crate::error::{Error, Result};
use crate::nn::{HasParams, Param, ParamMuts, ParamRefs};
use crate::rng::Rng;
use crate::scalar::Scalar;

const FILTERS: [usize; 5] = [1, 3, 3, 3, 1];
const LAYERS: usize = FILTERS.len() - 1;
const INIT_SCALE: f64 = 10.0;
/// Mass left outside each side of an extracted table.
const TAIL_MASS: f64 = 1e-9;

/// Layer parameters mapped to their constrained values, one channel.
struct Prepared {
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    gates: Vec<Vec<f64>>,
}

#[derive(Default)]
struct Trace {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

pub struct FactorizedModel<T> {
    channels: usize,
    matrices: Vec<Param<T>>,
    biases: Vec<Param<T>>,
    factors: Vec<Param<T>>,
    cache: Option<Array4<T>>,
}

impl<T: Scalar> FactorizedModel<T> {
    pub fn new(channels: usize, rng: &mut Rng) -> Self {
        let scale = INIT_SCALE.powf(1.0 / LAYERS as f64);
        let mut matrices = Vec::new();
        let mut biases = Vec::new();
        let mut factors = Vec::new();
        for i in 0..LAYERS {
            let (fi, fo) = (FILTERS[i], FILTERS[i + 1]);
            let init = (1.0 / scale / fo as f64).exp_m1().ln();
            matrices.push(Param::new(ArrayD::from_elem(IxDyn(&[channels, fo, fi]), T::of(init))));
            biases.push(Param::new(ArrayD::from_shape_fn(IxDyn(&[channels, fo]), |_| {
                T::of(rng.gen_range(-0.5..0.5))
            })));
            if i + 1 < LAYERS {
                factors.push(Param::new(ArrayD::zeros(IxDyn(&[channels, fo]))));
            }
        }
        FactorizedModel {
            channels,
            matrices,
            biases,
            factors,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn prepare(&self, c: usize) -> Prepared {
        let row = |p: &Param<T>, f: &dyn Fn(f64) -> f64| -> Vec<f64> {
            let v = p.value.as_slice().expect("standard layout");
            let per = v.len() / self.channels;
            v[c * per..(c + 1) * per].iter().map(|x| f(x.as_f64())).collect()
        };
        Prepared {
            weights: self.matrices.iter().map(|m| row(m, &|x| x.softplus())).collect(),
            biases: self.biases.iter().map(|b| row(b, &|x| x)).collect(),
            gates: self.factors.iter().map(|a| row(a, &|x| x.tanh())).collect(),
        }
    }

    fn logit(p: &Prepared, x: f64, mut trace: Option<&mut Trace>) -> f64 {
        let mut h = vec![x];
        for i in 0..LAYERS {
            let (fi, fo) = (FILTERS[i], FILTERS[i + 1]);
            let u: Vec<f64> = (0..fo)
                .map(|j| p.biases[i][j] + (0..fi).map(|k| p.weights[i][j * fi + k] * h[k]).sum::<f64>())
                .collect();
            if let Some(t) = trace.as_deref_mut() {
                t.inputs.push(h.clone());
                t.pre.push(u.clone());
            }
            h = if i + 1 < LAYERS {
                u.iter().zip(&p.gates[i]).map(|(&u, &g)| u + g * u.tanh()).collect()
            } else {
                u
            };
        }
        h[0]
    }

    /// Backpropagate `g = dLoss/dlogit` through one evaluation; returns
    /// `dLoss/dx` and adds parameter gradients for channel `c`.
    fn logit_backward(&mut self, p: &Prepared, c: usize, trace: &Trace, g: f64) -> f64 {
        let mut gh = vec![g];
        for i in (0..LAYERS).rev() {
            let (fi, fo) = (FILTERS[i], FILTERS[i + 1]);
            let u = &trace.pre[i];
            let h = &trace.inputs[i];
            let du: Vec<f64> = if i + 1 < LAYERS {
                let raw = self.factors[i].value.as_slice().unwrap()[c * fo..(c + 1) * fo].to_vec();
                let fgrad = &mut self.factors[i].grad.as_slice_mut().unwrap()[c * fo..(c + 1) * fo];
                (0..fo)
                    .map(|j| {
                        let t = u[j].tanh();
                        let a = raw[j].as_f64().tanh();
                        fgrad[j] += T::of(gh[j] * t * (1.0 - a * a));
                        gh[j] * (1.0 + p.gates[i][j] * (1.0 - t * t))
                    })
                    .collect()
            } else {
                gh.clone()
            };
            let bgrad = &mut self.biases[i].grad.as_slice_mut().unwrap()[c * fo..(c + 1) * fo];
            for j in 0..fo {
                bgrad[j] += T::of(du[j]);
            }
            let per = fo * fi;
            let raw = self.matrices[i].value.as_slice().unwrap()[c * per..(c + 1) * per].to_vec();
            let mgrad = &mut self.matrices[i].grad.as_slice_mut().unwrap()[c * per..(c + 1) * per];
            let mut next = vec![0.0; fi];
            for j in 0..fo {
                for k in 0..fi {
                    mgrad[j * fi + k] += T::of(du[j] * h[k] * raw[j * fi + k].as_f64().sigmoid());
                    next[k] += du[j] * p.weights[i][j * fi + k];
                }
            }
            gh = next;
        }
        gh[0]
    }

    /// Learned cumulative function of channel `c`.
    pub fn cdf(&self, c: usize, x: f64) -> f64 {
        Self::logit(&self.prepare(c), x, None).sigmoid()
    }

    fn bin(p: &Prepared, v: f64) -> f64 {
        let lo = Self::logit(p, v - 0.5, None);
        let up = Self::logit(p, v + 0.5, None);
        let s = if lo + up > 0.0 { -1.0 } else { 1.0 };
        ((s * up).sigmoid() - (s * lo).sigmoid()).abs()
    }

    /// Unclamped mass of the unit bin around `v` in channel `c`.
    pub fn bin_probability(&self, c: usize, v: f64) -> f64 {
        Self::bin(&self.prepare(c), v)
    }

    /// Clamped likelihoods of `v` (`N x C x h x w`), in memory order.
    pub fn likelihood(&self, v: &Array4<T>) -> Vec<f64> {
        let (n, c, h, w) = v.dim();
        assert_eq!(c, self.channels, "channel count mismatch");
        let prepared: Vec<Prepared> = (0..c).map(|i| self.prepare(i)).collect();
        let hw = h * w;
        v.as_slice()
            .expect("standard layout")
            .iter()
            .enumerate()
            .map(|(i, x)| Self::bin(&prepared[(i / hw) % c], x.as_f64()).max(P_MIN))
            .take(n * c * hw)
            .collect()
    }

    pub fn forward(&mut self, v: &Array4<T>) -> Vec<f64> {
        let p = self.likelihood(v);
        self.cache = Some(v.clone());
        p
    }

    /// Gradient of `scale * sum(-log2 p)` with respect to the input of the
    /// last [`forward`](Self::forward); parameter gradients are accumulated.
    pub fn backward_rate(&mut self, scale: f64) -> Array4<T> {
        let v = self.cache.take().expect("forward before backward");
        let (_, c, h, w) = v.dim();
        let hw = h * w;
        let prepared: Vec<Prepared> = (0..c).map(|i| self.prepare(i)).collect();
        let mut grad = Array4::zeros(v.raw_dim());
        let out = grad.as_slice_mut().expect("standard layout");
        for (i, x) in v.as_slice().expect("standard layout").iter().enumerate() {
            let ch = (i / hw) % c;
            let p = &prepared[ch];
            let x = x.as_f64();
            let mut tl = Trace::default();
            let mut tu = Trace::default();
            let lo = Self::logit(p, x - 0.5, Some(&mut tl));
            let up = Self::logit(p, x + 0.5, Some(&mut tu));
            let s = if lo + up > 0.0 { -1.0 } else { 1.0 };
            let (su, sl) = ((s * up).sigmoid(), (s * lo).sigmoid());
            let d = su - sl;
            let sg = if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
            let g = scale * neg_log2_grad(d.abs());
            let g_up = g * sg * s * su * (1.0 - su);
            let g_lo = -g * sg * s * sl * (1.0 - sl);
            let dx = self.logit_backward(p, ch, &tu, g_up) + self.logit_backward(p, ch, &tl, g_lo);
            out[i] = T::of(dx);
        }
        grad
    }

    /// Integer range holding all but `TAIL_MASS` on each side, capped.
    pub fn table_range(&self, c: usize) -> SymbolRange {
        let p = self.prepare(c);
        let quantile = |tau: f64| {
            let target = (tau / (1.0 - tau)).ln();
            let (mut lo, mut hi) = (-1e6, 1e6);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if Self::logit(&p, mid, None) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let median = quantile(0.5).round();
        let half = ((MAX_TABLE_SYMBOLS - 2) / 2) as f64;
        let min = quantile(TAIL_MASS).floor().max(median - half);
        let max = quantile(1.0 - TAIL_MASS).ceil().min(median + half);
        SymbolRange::new(min as i32, max as i32)
    }

    /// One quantized table per channel for entropy coding `round(v)`.
    pub fn cdf_tables(&self) -> Result<Vec<CdfTable>> {
        (0..self.channels)
            .map(|c| build_cdf_factorized(self, c, self.table_range(c)))
            .collect()
    }
}

/// Quantized table of channel `channel` over `range`; mass outside the
/// range goes to the escape symbol.
pub fn build_cdf_factorized<T: Scalar>(
    model: &FactorizedModel<T>,
    channel: usize,
    range: SymbolRange,
) -> Result<CdfTable> {
    if channel >= model.channels {
        return Err(Error::InvalidArgument(format!(
            "channel {channel} out of {}",
            model.channels
        )));
    }
    if range.is_empty() {
        return Err(Error::InvalidArgument("empty symbol range".into()));
    }
    let p = model.prepare(channel);
    let pmf: Vec<f64> = (range.min..=range.max)
        .map(|n| FactorizedModel::<T>::bin(&p, n as f64))
        .collect();
    CdfTable::from_pmf(range.min, &pmf)
}

impl<T: Scalar> HasParams<T> for FactorizedModel<T> {
    fn collect_params<'a>(&'a self, out: &mut ParamRefs<'a, T>) {
        for (i, p) in self.matrices.iter().enumerate() {
            out.push((format!("matrices.{i}"), p));
        }
        for (i, p) in self.biases.iter().enumerate() {
            out.push((format!("biases.{i}"), p));
        }
        for (i, p) in self.factors.iter().enumerate() {
            out.push((format!("factors.{i}"), p));
        }
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut ParamMuts<'a, T>) {
        for (i, p) in self.matrices.iter_mut().enumerate() {
            out.push((format!("matrices.{i}"), p));
        }
        for (i, p) in self.biases.iter_mut().enumerate() {
            out.push((format!("biases.{i}"), p));
        }
        for (i, p) in self.factors.iter_mut().enumerate() {
            out.push((format!("factors.{i}"), p));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_param_grads;
    use crate::rng::{stream, StreamId};

    fn model(seed: u64) -> FactorizedModel<f64> {
        let mut r = stream(seed, StreamId::init(0));
        let mut m = FactorizedModel::new(3, &mut r);
        // move away from the symmetric initialization so every path is exercised
        let mut ps = Vec::new();
        m.collect_params_mut(&mut ps);
        for (_, p) in ps {
            p.value.mapv_inplace(|v| v + r.gen_range(-0.3..0.3));
        }
        m
    }

    #[test]
    fn cdf_is_monotone_with_unit_limits() {
        let m = model(1);
        for c in 0..3 {
            let mut prev = 0.0;
            for i in -400..=400 {
                let f = m.cdf(c, i as f64 * 0.25);
                assert!(f >= prev);
                prev = f;
            }
            assert!(m.cdf(c, -1e4) < 1e-6 && m.cdf(c, 1e4) > 1.0 - 1e-6);
        }
    }

    #[test]
    fn integer_bins_sum_to_one() {
        for seed in 0..5 {
            let m = model(seed);
            for c in 0..3 {
                let total: f64 = (-2000..=2000).map(|n| m.bin_probability(c, n as f64)).sum();
                assert!((total - 1.0).abs() < 1e-4, "channel {c}: {total}");
            }
        }
    }

    #[test]
    fn initial_density_is_smooth_around_zero() {
        let mut r = stream(9, StreamId::init(0));
        let m = FactorizedModel::<f64>::new(4, &mut r);
        for c in 0..4 {
            for n in -3..=3 {
                assert!(m.bin_probability(c, n as f64) > 1e-3);
            }
        }
    }

    #[test]
    fn tables_cover_the_mass() {
        let m = model(2);
        for (c, t) in m.cdf_tables().unwrap().iter().enumerate() {
            let r = t.range();
            let inside: f64 = (r.min..=r.max).map(|n| m.bin_probability(c, n as f64)).sum();
            assert!(inside > 1.0 - 1e-8);
            assert!(r.len() < MAX_TABLE_SYMBOLS);
        }
    }

    #[test]
    fn factorized_table_matches_direct_likelihood() {
        let m = model(5);
        for c in 0..3 {
            let range = SymbolRange::new(-6, 6);
            let t = build_cdf_factorized(&m, c, range).unwrap();
            let c16 = t.cdf();
            assert_eq!(c16[0], 0);
            assert_eq!(*c16.last().unwrap(), crate::entropy::TOTAL_FREQ);
            assert!(c16.windows(2).all(|w| w[0] < w[1]));
            for n in range.min..=range.max {
                let direct = m.bin_probability(c, n as f64);
                let coded = t.probability(t.index_of(n).unwrap());
                // one quantization step per bin, plus the renormalization slack
                assert!((coded - direct).abs() < 4.0 * 2f64.powi(-16) + 1e-3 * direct, "{n}: {coded} vs {direct}");
            }
        }
        assert!(build_cdf_factorized(&m, 3, SymbolRange::new(0, 1)).is_err());
        assert!(build_cdf_factorized(&m, 0, SymbolRange::new(1, 0)).is_err());
    }

    #[test]
    fn rate_gradients_match_finite_differences() {
        let mut m = model(3);
        let mut r = stream(4, StreamId::aux(0));
        let v = Array4::from_shape_fn((2, 3, 2, 2), |_| r.gen_range(-3.0..3.0));
        let rate = |m: &FactorizedModel<f64>, v: &Array4<f64>| -> f64 {
            m.likelihood(v).iter().map(|p| -p.log2()).sum::<f64>() * 0.1
        };
        let worst = check_param_grads(
            &mut m,
            |m, train| {
                if train {
                    m.forward(&v);
                    m.backward_rate(0.1);
                }
                rate(m, &v)
            },
            6,
            1e-6,
        );
        assert!(worst < 1e-3, "worst {worst}");
        m.forward(&v);
        let g = m.backward_rate(0.1);
        for idx in [0, 5, 17, 23] {
            let mut up = v.clone();
            let mut dn = v.clone();
            up.as_slice_mut().unwrap()[idx] += 1e-6;
            dn.as_slice_mut().unwrap()[idx] -= 1e-6;
            let num = (rate(&m, &up) - rate(&m, &dn)) / 2e-6;
            let a = g.as_slice().unwrap()[idx];
            assert!((a - num).abs() < 1e-4 * (1.0 + num.abs()), "{a} vs {num}");
        }
    }
}
