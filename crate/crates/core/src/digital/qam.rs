//! Gray-mapped square QAM with full-log soft demapping.
//!
//! Bits are split evenly between the in-phase and quadrature rails, first
//! half to I. Per rail:
//!
//! | order | bits | level (before scaling) |
//! |-------|------|------------------------|
//! | 4     | 0    | +1                     |
//! |       | 1    | -1                     |
//! | 16    | 00   | +3                     |
//! |       | 01   | +1                     |
//! |       | 11   | -1                     |
//! |       | 10   | -3                     |
//!
//! Levels are scaled by `1/sqrt(2)` (4-QAM) or `1/sqrt(10)` (16-QAM) for unit
//! average energy, so `00` maps to `(1 + j) / sqrt(2)` in 4-QAM.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::SymbolVector;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum QamOrder {
    Qam4,
    Qam16,
}

impl QamOrder {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            QamOrder::Qam4 => 2,
            QamOrder::Qam16 => 4,
        }
    }

    fn bits_per_rail(self) -> usize {
        self.bits_per_symbol() / 2
    }

    fn scale(self) -> f64 {
        match self {
            QamOrder::Qam4 => std::f64::consts::FRAC_1_SQRT_2,
            QamOrder::Qam16 => 1.0 / 10f64.sqrt(),
        }
    }

    /// `(bit pattern, level)` for one rail, bit pattern MSB first.
    fn rail_points(self) -> &'static [(u8, f64)] {
        match self {
            QamOrder::Qam4 => &[(0, 1.0), (1, -1.0)],
            QamOrder::Qam16 => &[(0b00, 3.0), (0b01, 1.0), (0b11, -1.0), (0b10, -3.0)],
        }
    }
}

impl TryFrom<u32> for QamOrder {
    type Error = String;

    fn try_from(v: u32) -> std::result::Result<Self, String> {
        match v {
            4 => Ok(QamOrder::Qam4),
            16 => Ok(QamOrder::Qam16),
            other => Err(format!("unsupported QAM order {other} (expected 4 or 16)")),
        }
    }
}

impl From<QamOrder> for u32 {
    fn from(o: QamOrder) -> u32 {
        match o {
            QamOrder::Qam4 => 4,
            QamOrder::Qam16 => 16,
        }
    }
}

fn rail_level(order: QamOrder, bits: &[u8]) -> f64 {
    let pattern = bits.iter().fold(0u8, |acc, &b| (acc << 1) | (b & 1));
    let (_, level) = order
        .rail_points()
        .iter()
        .find(|(p, _)| *p == pattern)
        .expect("every pattern is mapped");
    level * order.scale()
}

pub fn qam_modulate<T: Scalar>(bits: &[u8], order: QamOrder) -> Result<SymbolVector<T>> {
    let m = order.bits_per_symbol();
    if bits.is_empty() || !bits.len().is_multiple_of(m) {
        return Err(Error::shape(format!(
            "{} bits cannot fill {m}-bit symbols",
            bits.len()
        )));
    }
    let r = order.bits_per_rail();
    let symbols = bits
        .chunks_exact(m)
        .map(|c| Complex::new(T::of(rail_level(order, &c[..r])), T::of(rail_level(order, &c[r..]))))
        .collect();
    SymbolVector::new(symbols)
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn rail_llrs(order: QamOrder, y: f64, sigma2: f64, out: &mut Vec<f64>) {
    let r = order.bits_per_rail();
    // per-rail noise variance sigma2 / 2
    let inv = 1.0 / sigma2;
    let metrics: Vec<(u8, f64)> = order
        .rail_points()
        .iter()
        .map(|&(p, l)| (p, -(y - l * order.scale()).powi(2) * inv))
        .collect();
    for bit in 0..r {
        let shift = r - 1 - bit;
        let (mut l0, mut l1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(p, m) in &metrics {
            if (p >> shift) & 1 == 0 {
                l0 = log_sum_exp(l0, m);
            } else {
                l1 = log_sum_exp(l1, m);
            }
        }
        out.push(l0 - l1);
    }
}

/// Exact bit LLRs `log P(b = 0 | y) / P(b = 1 | y)` for uniform priors.
pub fn qam_demodulate_llr<T: Scalar>(y: &[Complex<T>], order: QamOrder, sigma2: f64) -> Vec<f64> {
    let sigma2 = sigma2.max(1e-12);
    let mut out = Vec::with_capacity(y.len() * order.bits_per_symbol());
    for s in y {
        rail_llrs(order, s.re.as_f64(), sigma2, &mut out);
        rail_llrs(order, s.im.as_f64(), sigma2, &mut out);
    }
    out
}
