//! Reconstruction quality.

use jsc_core::Scalar;
use ndarray::ArrayView3;

/// Reported instead of infinity for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Mean squared error on the `[0, 255]` scale; `s_hat` is clamped to
/// `[0, 1]` first.
pub fn mse_255<T: Scalar>(s: ArrayView3<'_, T>, s_hat: ArrayView3<'_, T>) -> f64 {
    assert_eq!(s.dim(), s_hat.dim(), "image shapes differ");
    let n = s.len() as f64;
    s.iter()
        .zip(s_hat.iter())
        .map(|(a, b)| {
            let d = 255.0 * (a.as_f64() - b.as_f64().clamp(0.0, 1.0));
            d * d
        })
        .sum::<f64>()
        / n
}

pub fn psnr_from_mse_255(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP_DB)
}

/// `10 log10(255^2 / MSE_255)`, capped at [`PSNR_CAP_DB`].
pub fn evaluate_psnr<T: Scalar>(s: ArrayView3<'_, T>, s_hat: ArrayView3<'_, T>) -> f64 {
    psnr_from_mse_255(mse_255(s, s_hat))
}

/// Mean and (population) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
