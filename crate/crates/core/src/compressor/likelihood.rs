//! Discretized likelihoods of integer (or noisy) latents and their
//! gradients. All arithmetic is in `f64`.

use crate::scalar::Scalar;

/// Smallest admissible scale of the conditional Gaussian.
pub const SIGMA_MIN: f64 = 1e-6;
/// Likelihood floor; bounds the code length of any element at 16 bits.
pub const P_MIN: f64 = 1.0 / 65536.0;

fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn big_phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// `Phi((z - mu + 1/2) / sigma) - Phi((z - mu - 1/2) / sigma)`, evaluated on
/// `|z - mu|` so the subtraction stays in the lower tail.
pub fn gaussian_bin(z: f64, mu: f64, sigma: f64) -> f64 {
    let v = (z - mu).abs();
    big_phi((0.5 - v) / sigma) - big_phi((-0.5 - v) / sigma)
}

/// Partial derivatives `(dp/dz, dp/dsigma)` of [`gaussian_bin`];
/// `dp/dmu = -dp/dz`.
pub fn gaussian_bin_grad(z: f64, mu: f64, sigma: f64) -> (f64, f64) {
    let a = (z - mu + 0.5) / sigma;
    let b = (z - mu - 0.5) / sigma;
    let (pa, pb) = (phi(a), phi(b));
    ((pa - pb) / sigma, -(a * pa - b * pb) / sigma)
}

/// Elementwise clamped Gaussian likelihoods.
pub fn gaussian_uniform_likelihood<T: Scalar>(z: &[T], mu: &[T], sigma: &[T]) -> Vec<f64> {
    z.iter()
        .zip(mu)
        .zip(sigma)
        .map(|((z, m), s)| {
            let s = s.as_f64().max(SIGMA_MIN);
            gaussian_bin(z.as_f64(), m.as_f64(), s).max(P_MIN)
        })
        .collect()
}

/// `max(softplus(raw), SIGMA_MIN)`.
pub fn scale_from_raw(raw: f64) -> f64 {
    raw.softplus().max(SIGMA_MIN)
}

/// Gradient of the scale map. Below the floor, the gradient only passes
/// when it would move the scale back up.
pub fn scale_from_raw_grad(raw: f64, grad_sigma: f64) -> f64 {
    if raw.softplus() >= SIGMA_MIN || grad_sigma < 0.0 {
        grad_sigma * raw.sigmoid()
    } else {
        0.0
    }
}

/// `d(-log2 max(p, P_MIN)) / dp`. The floor passes gradients through in
/// the direction that raises `p`, which is always the case for this loss.
pub fn neg_log2_grad(p: f64) -> f64 {
    -1.0 / (p.max(P_MIN) * std::f64::consts::LN_2)
}
