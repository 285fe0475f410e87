use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nearest-neighbour scalar quantizer with `2^m` sorted levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarQuantizer {
    levels: Vec<f64>,
    thresholds: Vec<f64>,
}

impl ScalarQuantizer {
    pub fn new(mut levels: Vec<f64>) -> Result<Self> {
        if !levels.len().is_power_of_two() || levels.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need 2^m >= 2 levels, got {}",
                levels.len()
            )));
        }
        if levels.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidArgument("levels must be finite".into()));
        }
        levels.sort_by(f64::total_cmp);
        if levels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("levels must be distinct".into()));
        }
        let thresholds = levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(ScalarQuantizer { levels, thresholds })
    }

    /// `2^m` evenly spaced levels covering `[lo, hi]` cell by cell.
    pub fn uniform(m: u32, lo: f64, hi: f64) -> Result<Self> {
        let n = 1usize << m;
        let step = (hi - lo) / n as f64;
        Self::new((0..n).map(|i| lo + (i as f64 + 0.5) * step).collect())
    }

    pub fn bits(&self) -> u32 {
        self.levels.len().trailing_zeros()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn index(&self, x: f64) -> u32 {
        self.thresholds.partition_point(|&t| t < x) as u32
    }

    pub fn level(&self, index: u32) -> f64 {
        self.levels[index as usize]
    }

    pub fn quantize(&self, x: f64) -> f64 {
        self.level(self.index(x))
    }

    /// Mean squared quantization error over `samples`.
    pub fn distortion(&self, samples: &[f64]) -> f64 {
        samples.iter().map(|&x| (x - self.quantize(x)).powi(2)).sum::<f64>() / samples.len().max(1) as f64
    }
}

/// Lloyd's algorithm on sorted samples with prefix sums.
struct Design<'a> {
    sorted: &'a [f64],
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl<'a> Design<'a> {
    fn new(sorted: &'a [f64]) -> Self {
        let mut s1 = Vec::with_capacity(sorted.len() + 1);
        let mut s2 = Vec::with_capacity(sorted.len() + 1);
        let (mut a, mut b) = (0.0, 0.0);
        s1.push(0.0);
        s2.push(0.0);
        for &x in sorted {
            a += x;
            b += x * x;
            s1.push(a);
            s2.push(b);
        }
        Design { sorted, s1, s2 }
    }

    fn bounds(&self, thresholds: &[f64]) -> Vec<usize> {
        let mut b = vec![0];
        b.extend(thresholds.iter().map(|&t| self.sorted.partition_point(|&x| x <= t)));
        b.push(self.sorted.len());
        b
    }

    fn distortion(&self, levels: &[f64], bounds: &[usize]) -> f64 {
        let mut d = 0.0;
        for (j, &c) in levels.iter().enumerate() {
            let (a, b) = (bounds[j], bounds[j + 1]);
            let n = (b - a) as f64;
            d += (self.s2[b] - self.s2[a]) - 2.0 * c * (self.s1[b] - self.s1[a]) + c * c * n;
        }
        (d / self.sorted.len() as f64).max(0.0)
    }

    fn centroids(&self, levels: &[f64], bounds: &[usize]) -> Vec<f64> {
        levels
            .iter()
            .enumerate()
            .map(|(j, &old)| {
                let (a, b) = (bounds[j], bounds[j + 1]);
                if b > a {
                    (self.s1[b] - self.s1[a]) / (b - a) as f64
                } else {
                    old
                }
            })
            .collect()
    }
}

fn midpoints(levels: &[f64]) -> Vec<f64> {
    levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Lloyd design returning the per-iteration design distortion as well.
pub fn lloyd_design_traced(samples: &[f64], m: u32, tol: f64, max_iter: usize) -> Result<(ScalarQuantizer, Vec<f64>)> {
    let n_levels = 1usize << m;
    let mut sorted: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let mut unique = sorted.clone();
    unique.dedup();
    if unique.len() < n_levels {
        return Err(Error::InsufficientSamples {
            needed: n_levels,
            got: unique.len(),
        });
    }
    let design = Design::new(&sorted);
    let mut levels: Vec<f64> = (0..n_levels)
        .map(|j| unique[((j as f64 + 0.5) * unique.len() as f64 / n_levels as f64) as usize])
        .collect();
    let mut bounds = design.bounds(&midpoints(&levels));
    let mut history = vec![design.distortion(&levels, &bounds)];
    for _ in 0..max_iter {
        let mut next = design.centroids(&levels, &bounds);
        next.sort_by(f64::total_cmp);
        next.dedup();
        if next.len() < n_levels {
            break;
        }
        let next_bounds = design.bounds(&midpoints(&next));
        let d = design.distortion(&next, &next_bounds);
        let prev = *history.last().expect("nonempty");
        levels = next;
        bounds = next_bounds;
        history.push(d);
        if d == 0.0 || (prev - d) <= tol * prev {
            break;
        }
    }
    Ok((ScalarQuantizer::new(levels)?, history))
}

/// `2^m`-level quantizer minimizing mean squared error on `samples`.
pub fn lloyd_design(samples: &[f64], m: u32, tol: f64, max_iter: usize) -> Result<ScalarQuantizer> {
    lloyd_design_traced(samples, m, tol, max_iter).map(|(q, _)| q)
}
