//! Complex channel symbols, the unit average-power constraint and the AWGN
//! channel shared by every transmission scheme.

use num_complex::Complex;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{self, Rng, StreamId};
use crate::scalar::Scalar;

/// A length-k vector of complex channel inputs or outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolVector<T> {
    symbols: Vec<Complex<T>>,
}

impl<T: Scalar> SymbolVector<T> {
    pub fn new(symbols: Vec<Complex<T>>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::shape("symbol vector needs k > 0 channel uses"));
        }
        Ok(SymbolVector { symbols })
    }

    /// Number of complex channel uses.
    pub fn k(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[Complex<T>] {
        &self.symbols
    }

    pub fn into_symbols(self) -> Vec<Complex<T>> {
        self.symbols
    }

    /// `(1/k) * ||x||^2`.
    pub fn average_power(&self) -> T {
        let sum: T = self.symbols.iter().map(|s| s.norm_sqr()).sum();
        sum / T::of(self.k() as f64)
    }

    pub fn scale(&self, gain: T) -> Self {
        SymbolVector {
            symbols: self.symbols.iter().map(|s| s * gain).collect(),
        }
    }
}

/// Noise level of one link. `sigma2` is the variance per complex dimension,
/// so `SNR = 1 / sigma2` under unit signal power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub sigma2: f64,
}

impl NoiseSpec {
    pub fn from_snr_db(snr_db: f64) -> Self {
        NoiseSpec {
            snr_db,
            sigma2: snr_db_to_sigma2(snr_db),
        }
    }

    pub fn noiseless() -> Self {
        NoiseSpec {
            snr_db: f64::INFINITY,
            sigma2: 0.0,
        }
    }
}

pub fn snr_db_to_sigma2(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

pub fn sigma2_to_snr_db(sigma2: f64) -> f64 {
    -10.0 * sigma2.log10()
}

/// Shannon capacity of the complex AWGN channel in bits per channel use.
pub fn awgn_capacity(snr_db: f64) -> f64 {
    (1.0 + 10f64.powf(snr_db / 10.0)).log2()
}

/// Interleaved packing: entry `2j` is the real part and `2j+1` the
/// imaginary part of symbol `j`.
pub fn pack_complex<T: Scalar>(raw: &[T]) -> Result<SymbolVector<T>> {
    if !raw.len().is_multiple_of(2) {
        return Err(Error::shape(format!(
            "complex packing needs an even number of entries, got {}",
            raw.len()
        )));
    }
    let symbols = raw
        .chunks_exact(2)
        .map(|p| Complex::new(p[0], p[1]))
        .collect();
    SymbolVector::new(symbols)
}

pub fn unpack_complex<T: Scalar>(x: &SymbolVector<T>) -> Vec<T> {
    x.symbols.iter().flat_map(|s| [s.re, s.im]).collect()
}

/// Scale `raw` (2k reals) so the packed vector has `(1/k)||x||^2 = 1`.
pub fn normalize_power<T: Scalar>(raw: &[T], k: usize) -> Result<SymbolVector<T>> {
    if raw.len() != 2 * k {
        return Err(Error::shape(format!(
            "expected {} real entries for k = {k}, got {}",
            2 * k,
            raw.len()
        )));
    }
    let mut scaled = raw.to_vec();
    normalize_power_in_place(&mut scaled)?;
    pack_complex(&scaled)
}

/// Real-domain form of [`normalize_power`] on an interleaved buffer.
/// Returns the norm of the input so callers can backpropagate.
pub fn normalize_power_in_place<T: Scalar>(raw: &mut [T]) -> Result<T> {
    let energy: f64 = raw.iter().map(|&v| v.as_f64() * v.as_f64()).sum();
    if energy <= 0.0 || !energy.is_finite() {
        return Err(Error::Degenerate("cannot power-normalize a zero or non-finite vector"));
    }
    let norm = energy.sqrt();
    let gain = ((raw.len() / 2) as f64).sqrt() / norm;
    raw.iter_mut().for_each(|v| *v = T::of(v.as_f64() * gain));
    Ok(T::of(norm))
}

/// Add circularly-symmetric complex Gaussian noise of variance `sigma2` per
/// complex dimension (`sigma2 / 2` per real component).
pub fn add_awgn_real<T: Scalar>(buf: &mut [T], sigma2: f64, rng: &mut Rng) {
    if sigma2 <= 0.0 {
        return;
    }
    let std = (sigma2 / 2.0).sqrt();
    for v in buf.iter_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *v += T::of(std * n);
    }
}

pub fn awgn_apply_with<T: Scalar>(
    x: &SymbolVector<T>,
    noise: &NoiseSpec,
    rng: &mut Rng,
) -> SymbolVector<T> {
    let mut raw = unpack_complex(x);
    add_awgn_real(&mut raw, noise.sigma2, rng);
    pack_complex(&raw).expect("unpacked vector has even length")
}

/// `y = x + w`, deterministic in `seed`.
pub fn awgn_apply<T: Scalar>(x: &SymbolVector<T>, noise: &NoiseSpec, seed: u64) -> SymbolVector<T> {
    let mut rng = rng::stream(seed, StreamId::aux(0));
    awgn_apply_with(x, noise, &mut rng)
}
