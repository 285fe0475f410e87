use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst};

/// Real scalar used throughout the numerical core.
///
/// Implemented for `f32` (training and deployment) and `f64` (oracles and
/// gradient checks). Conversions from `f64` are lossless-or-rounding and
/// never fail for the finite literals used here.
pub trait Scalar:
    Float
    + FloatConst
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Tag written into checkpoints.
    const DTYPE: &'static str;

    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Standard normal CDF computed through `erfc` so the lower tail keeps
    /// full relative precision.
    fn normal_cdf(self) -> Self {
        Self::of(0.5) * (-self * Self::FRAC_1_SQRT_2()).erfc()
    }

    fn normal_pdf(self) -> Self {
        let inv_sqrt_2pi = Self::FRAC_1_SQRT_2() * Self::FRAC_2_SQRT_PI() * Self::of(0.5);
        inv_sqrt_2pi * (-(self * self) * Self::of(0.5)).exp()
    }

    /// Logistic sigmoid without overflow for large |x|.
    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }

    fn softplus(self) -> Self {
        // log(1 + e^x) = max(x, 0) + log1p(e^-|x|)
        self.max(Self::zero()) + (-self.abs()).exp().ln_1p()
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";

    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";

    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}
