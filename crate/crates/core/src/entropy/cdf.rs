use crate::error::{Error, Result};

/// Frequency precision in bits; every table sums to `2^PRECISION`.
pub const PRECISION: u32 = 16;
pub const TOTAL_FREQ: u32 = 1 << PRECISION;
/// Upper bound on coded symbols per table (escape included).
pub const MAX_TABLE_SYMBOLS: usize = 4097;

/// Inclusive integer range covered directly by a table; values outside it
/// are coded through the escape symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymbolRange {
    pub min: i32,
    pub max: i32,
}

impl SymbolRange {
    pub fn new(min: i32, max: i32) -> Self {
        SymbolRange { min, max }
    }

    /// `round(mu) +- (ceil(tail_sigmas * sigma) + 1)`, capped to the table
    /// size limit.
    pub fn around_gaussian(mu: f64, sigma: f64) -> Self {
        const TAIL_SIGMAS: f64 = 8.0;
        let max_half = ((MAX_TABLE_SYMBOLS - 2) / 2) as f64;
        let center = mu.round_ties_even().clamp(-1e9, 1e9) as i64;
        let half = ((TAIL_SIGMAS * sigma).ceil() + 1.0).clamp(1.0, max_half) as i64;
        SymbolRange {
            min: (center - half).max(i32::MIN as i64 + 1) as i32,
            max: (center + half).min(i32::MAX as i64 - 1) as i32,
        }
    }

    pub fn len(&self) -> usize {
        if self.max < self.min {
            0
        } else {
            (self.max as i64 - self.min as i64 + 1) as usize
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Quantized cumulative frequencies for the symbols `offset ..` plus one
/// trailing escape symbol.
///
/// `cdf[0] = 0`, `cdf[len] = 2^16` and entries are strictly increasing, so
/// every symbol, escape included, has frequency at least 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdfTable {
    offset: i32,
    cdf: Vec<u32>,
}

impl CdfTable {
    /// Quantize a probability mass function over `offset, offset+1, ...`.
    /// Mass missing from `pmf` (tails) is assigned to the escape symbol.
    pub fn from_pmf(offset: i32, pmf: &[f64]) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::InvalidArgument("empty symbol range".into()));
        }
        let n = pmf.len() + 1;
        if n > MAX_TABLE_SYMBOLS {
            return Err(Error::InvalidArgument(format!(
                "table with {n} symbols exceeds {MAX_TABLE_SYMBOLS}"
            )));
        }
        let mut probs: Vec<f64> = pmf
            .iter()
            .map(|&p| if p.is_finite() && p > 0.0 { p } else { 0.0 })
            .collect();
        let in_range: f64 = probs.iter().sum();
        probs.push((1.0 - in_range).max(0.0));
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            // nothing usable: fall back to uniform
            probs.iter_mut().for_each(|p| *p = 1.0);
        }
        let total: f64 = probs.iter().sum();

        // floor of the ideal frequency, at least 1; then settle the
        // difference by largest remainder (add) or largest frequency (take)
        let mut freqs = Vec::with_capacity(n);
        let mut remainders = Vec::with_capacity(n);
        for (i, &p) in probs.iter().enumerate() {
            let ideal = p / total * TOTAL_FREQ as f64;
            let f = ideal.floor().max(1.0);
            freqs.push(f as u32);
            remainders.push((ideal - f, i));
        }
        let mut diff = TOTAL_FREQ as i64 - freqs.iter().map(|&f| f as i64).sum::<i64>();
        if diff > 0 {
            remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut j = 0;
            while diff > 0 {
                freqs[remainders[j % n].1] += 1;
                diff -= 1;
                j += 1;
            }
        } else if diff < 0 {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| freqs[b].cmp(&freqs[a]).then(a.cmp(&b)));
            let mut j = 0;
            while diff < 0 {
                let i = order[j % n];
                if freqs[i] > 1 {
                    freqs[i] -= 1;
                    diff += 1;
                }
                j += 1;
            }
        }

        let mut cdf = Vec::with_capacity(n + 1);
        cdf.push(0u32);
        let mut acc = 0u32;
        for f in freqs {
            acc += f;
            cdf.push(acc);
        }
        debug_assert_eq!(acc, TOTAL_FREQ);
        Ok(CdfTable { offset, cdf })
    }

    /// Build directly from a cumulative table (validated).
    pub fn from_cdf(offset: i32, cdf: Vec<u32>) -> Result<Self> {
        let ok = cdf.len() >= 2
            && cdf[0] == 0
            && *cdf.last().unwrap() == TOTAL_FREQ
            && cdf.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(Error::InvalidArgument("invalid cumulative table".into()));
        }
        Ok(CdfTable { offset, cdf })
    }

    pub fn offset(&self) -> i32 {
        self.offset
    }

    pub fn cdf(&self) -> &[u32] {
        &self.cdf
    }

    /// Coded symbols including the escape.
    pub fn num_symbols(&self) -> usize {
        self.cdf.len() - 1
    }

    pub fn escape_index(&self) -> usize {
        self.num_symbols() - 1
    }

    pub fn range(&self) -> SymbolRange {
        SymbolRange::new(self.offset, self.offset + self.escape_index() as i32 - 1)
    }

    /// Table index of `value`, or `None` if it needs the escape path.
    pub fn index_of(&self, value: i32) -> Option<usize> {
        let i = value as i64 - self.offset as i64;
        (i >= 0 && (i as usize) < self.escape_index()).then_some(i as usize)
    }

    pub fn freq(&self, index: usize) -> u32 {
        self.cdf[index + 1] - self.cdf[index]
    }

    pub fn probability(&self, index: usize) -> f64 {
        self.freq(index) as f64 / TOTAL_FREQ as f64
    }

    /// Ideal code length of `value` in bits, escape payload excluded.
    pub fn code_length(&self, value: i32) -> f64 {
        let idx = self.index_of(value).unwrap_or(self.escape_index());
        -self.probability(idx).log2()
    }

    /// Index whose interval contains `target` (`0 <= target < 2^16`).
    pub(crate) fn lookup(&self, target: u32) -> usize {
        // first cdf entry strictly greater than target, minus one
        self.cdf.partition_point(|&c| c <= target) - 1
    }
}

/// Mass of the integer bin `[value - 1/2, value + 1/2]` under `N(mu, sigma^2)`.
pub fn gaussian_bin_probability(value: f64, mu: f64, sigma: f64) -> f64 {
    let v = (value - mu).abs();
    let upper = ((0.5 - v) / sigma) * -std::f64::consts::FRAC_1_SQRT_2;
    let lower = ((-0.5 - v) / sigma) * -std::f64::consts::FRAC_1_SQRT_2;
    0.5 * (libm::erfc(upper) - libm::erfc(lower))
}

/// Table for one latent element with mean `mu` and scale `sigma`.
pub fn build_cdf_gaussian(mu: f64, sigma: f64, range: SymbolRange) -> Result<CdfTable> {
    if range.is_empty() {
        return Err(Error::InvalidArgument("empty symbol range".into()));
    }
    let pmf: Vec<f64> = (range.min..=range.max)
        .map(|s| gaussian_bin_probability(s as f64, mu, sigma))
        .collect();
    CdfTable::from_pmf(range.min, &pmf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamId};
    use rand::Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn central_bin_of_standard_normal() {
        // independent normal CDF implementation as the oracle
        let n = Normal::new(0.0, 1.0).unwrap();
        let oracle = n.cdf(0.5) - n.cdf(-0.5);
        assert!((oracle - 0.38292).abs() < 1e-5);
        let t = build_cdf_gaussian(0.0, 1.0, SymbolRange::around_gaussian(0.0, 1.0)).unwrap();
        let idx = t.index_of(0).unwrap();
        assert!((t.probability(idx) - oracle).abs() <= 2f64.powi(-15));
    }

    #[test]
    fn tables_are_strictly_increasing_for_random_parameters() {
        let mut rng = stream(4, StreamId::aux(0));
        for _ in 0..10_000 {
            let mu: f64 = rng.gen_range(-50.0..50.0);
            let sigma: f64 = 10f64.powf(rng.gen_range(-6.0..3.0));
            let t = build_cdf_gaussian(mu, sigma, SymbolRange::around_gaussian(mu, sigma)).unwrap();
            let c = t.cdf();
            assert_eq!(c[0], 0);
            assert_eq!(*c.last().unwrap(), TOTAL_FREQ);
            assert!(c.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn out_of_range_maps_to_escape() {
        let t = build_cdf_gaussian(0.0, 1.0, SymbolRange::new(-3, 3)).unwrap();
        assert_eq!(t.num_symbols(), 8);
        assert_eq!(t.index_of(-4), None);
        assert_eq!(t.index_of(4), None);
        assert_eq!(t.index_of(3), Some(6));
        assert!(build_cdf_gaussian(0.0, 1.0, SymbolRange::new(1, 0)).is_err());
    }

    #[test]
    fn rejects_invalid_cdf() {
        assert!(CdfTable::from_cdf(0, vec![0, 10, 10, TOTAL_FREQ]).is_err());
        assert!(CdfTable::from_cdf(0, vec![1, TOTAL_FREQ]).is_err());
        assert!(CdfTable::from_cdf(0, vec![0, 5, TOTAL_FREQ]).is_ok());
    }

    #[test]
    fn degenerate_pmf_still_codable() {
        let t = CdfTable::from_pmf(0, &[0.0, 0.0, f64::NAN]).unwrap();
        assert!(t.cdf().windows(2).all(|w| w[0] < w[1]));
        let t = CdfTable::from_pmf(0, &[1.0]).unwrap();
        assert_eq!(t.freq(0), TOTAL_FREQ - 1);
    }
}
