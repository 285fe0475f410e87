//! Binary LDPC codes: sparse parity-check matrices, systematic encoding and
//! log-domain sum-product decoding.
//!
//! The built-in code is a quasi-cyclic rate-1/2 code of length 1536: a
//! 12 x 24 base matrix lifted by 64-bit circulants. Information columns have
//! weight 3. The parity half has the block dual-diagonal layout of the IEEE
//! 802.11n codes (a weight-3 first column with shifts 1, 0, 1, then pairs of
//! identities), which keeps it invertible. Information shifts are drawn from
//! a fixed seed and rejected until the lifted graph has no 4-cycles.
//!
//! # Sparse text format
//!
//! ```text
//! # comment lines start with '#'
//! <n> <m>
//! <column indices of the ones in check row 0>
//! ...
//! <column indices of the ones in check row m-1>
//! ```
//!
//! Columns `0..n-m` carry information bits. The last `m` columns must form
//! an invertible matrix over GF(2).

use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{stream, StreamId};

const BASE_ROWS: usize = 12;
const LIFT: usize = 64;
const INFO_ROW_OFFSETS: [usize; 3] = [0, 3, 7];
const SHIFT_SEED: u64 = 0x1d9c_2024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityMatrix {
    n: usize,
    rows: Vec<Vec<u32>>,
}

impl ParityMatrix {
    pub fn new(n: usize, mut rows: Vec<Vec<u32>>) -> Result<Self> {
        if rows.is_empty() || rows.len() >= n {
            return Err(Error::InvalidArgument(format!(
                "parity matrix needs 0 < m < n, got m = {} n = {n}",
                rows.len()
            )));
        }
        for (i, r) in rows.iter_mut().enumerate() {
            r.sort_unstable();
            r.dedup();
            if r.is_empty() || r.last().is_some_and(|&c| c as usize >= n) {
                return Err(Error::InvalidArgument(format!("check row {i} is empty or out of range")));
            }
        }
        Ok(ParityMatrix { n, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn edges(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn syndrome_is_zero(&self, word: &[u8]) -> bool {
        self.rows
            .iter()
            .all(|r| r.iter().fold(0u8, |acc, &c| acc ^ word[c as usize]) == 0)
    }

    /// Whether any two columns share more than one check.
    pub fn has_four_cycle(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        for r in &self.rows {
            for (i, &a) in r.iter().enumerate() {
                for &b in &r[i + 1..] {
                    if !seen.insert((a.min(b), a.max(b))) {
                        return true;
                    }
                }
            }
        }
        false
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# LDPC parity-check matrix\n{} {}\n", self.n, self.m());
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(u32::to_string).collect();
            writeln!(s, "{}", line.join(" ")).expect("writing to a String");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty parity matrix file".into()))?;
        let dims: Vec<usize> = parse_all(header)?;
        let [n, m] = dims[..] else {
            return Err(Error::InvalidArgument(format!("bad header {header:?}")));
        };
        let rows: Vec<Vec<u32>> = lines.map(parse_all).collect::<Result<_>>()?;
        if rows.len() != m {
            return Err(Error::InvalidArgument(format!(
                "header declares {m} checks, file has {}",
                rows.len()
            )));
        }
        ParityMatrix::new(n, rows)
    }
}

fn parse_all<F: std::str::FromStr>(line: &str) -> Result<Vec<F>> {
    line.split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad integer {t:?}")))
        })
        .collect()
}

/// Ones of the `z x z` circulant with shift `s` at block `(br, bc)`.
fn push_circulant(rows: &mut [Vec<u32>], br: usize, bc: usize, s: usize) {
    for t in 0..LIFT {
        rows[br * LIFT + t].push((bc * LIFT + (t + s) % LIFT) as u32);
    }
}

fn default_matrix() -> ParityMatrix {
    let m = BASE_ROWS * LIFT;
    let mut rows = vec![Vec::new(); m];
    // parity part: weight-3 first column (shifts 1, 0, 1), then dual diagonal
    let p0 = BASE_ROWS;
    push_circulant(&mut rows, 0, p0, 1);
    push_circulant(&mut rows, BASE_ROWS / 2, p0, 0);
    push_circulant(&mut rows, BASE_ROWS - 1, p0, 1);
    for j in 1..BASE_ROWS {
        push_circulant(&mut rows, j - 1, p0 + j, 0);
        push_circulant(&mut rows, j, p0 + j, 0);
    }
    let mut rng = stream(SHIFT_SEED, StreamId::aux(0));
    for bc in 0..BASE_ROWS {
        loop {
            let mut cand = rows.clone();
            for off in INFO_ROW_OFFSETS {
                push_circulant(&mut cand, (bc + off) % BASE_ROWS, bc, rng.gen_range(0..LIFT));
            }
            let h = ParityMatrix { n: 2 * m, rows: cand };
            if !h.has_four_cycle() {
                rows = h.rows;
                break;
            }
        }
    }
    ParityMatrix::new(2 * m, rows).expect("constructed matrix is valid")
}

/// A systematic LDPC code with its Tanner graph laid out for decoding.
#[derive(Debug)]
pub struct LdpcCode {
    h: ParityMatrix,
    k: usize,
    /// Row `i` gives parity bit `i` as the XOR of info bits selected by the mask.
    generator: Vec<Vec<u64>>,
    check_start: Vec<usize>,
    edge_var: Vec<u32>,
}

impl LdpcCode {
    pub fn new(h: ParityMatrix) -> Result<Self> {
        let n = h.n();
        let m = h.m();
        let k = n - m;
        let words = n.div_ceil(64);
        let mut dense: Vec<Vec<u64>> = h
            .rows()
            .iter()
            .map(|r| {
                let mut w = vec![0u64; words];
                for &c in r {
                    w[c as usize / 64] |= 1 << (c % 64);
                }
                w
            })
            .collect();
        // Gauss-Jordan over the parity columns: H -> [A | I].
        for i in 0..m {
            let col = k + i;
            let bit = |row: &Vec<u64>| (row[col / 64] >> (col % 64)) & 1 == 1;
            let pivot = (i..m)
                .find(|&r| bit(&dense[r]))
                .ok_or_else(|| Error::InvalidArgument("parity part of H is singular".into()))?;
            dense.swap(i, pivot);
            let prow = dense[i].clone();
            for (r, row) in dense.iter_mut().enumerate() {
                if r != i && bit(row) {
                    row.iter_mut().zip(&prow).for_each(|(a, b)| *a ^= b);
                }
            }
        }
        let info_words = k.div_ceil(64);
        let generator = dense
            .iter()
            .map(|row| {
                let mut g = row[..info_words].to_vec();
                if !k.is_multiple_of(64) {
                    let last = info_words - 1;
                    g[last] &= (1u64 << (k % 64)) - 1;
                }
                g
            })
            .collect();

        let mut check_start = Vec::with_capacity(m + 1);
        let mut edge_var = Vec::with_capacity(h.edges());
        check_start.push(0);
        for r in h.rows() {
            edge_var.extend_from_slice(r);
            check_start.push(edge_var.len());
        }
        Ok(LdpcCode {
            h,
            k,
            generator,
            check_start,
            edge_var,
        })
    }

    /// The built-in (1536, 768) code, constructed once per process.
    pub fn standard() -> Arc<LdpcCode> {
        static CODE: OnceLock<Arc<LdpcCode>> = OnceLock::new();
        CODE.get_or_init(|| Arc::new(LdpcCode::new(default_matrix()).expect("built-in code is full rank")))
            .clone()
    }

    pub fn parity_matrix(&self) -> &ParityMatrix {
        &self.h
    }

    pub fn n(&self) -> usize {
        self.h.n()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n() as f64
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.k {
            return Err(Error::shape(format!(
                "LDPC block takes {} info bits, got {}",
                self.k,
                info.len()
            )));
        }
        let mut packed = vec![0u64; self.k.div_ceil(64)];
        for (i, &b) in info.iter().enumerate() {
            packed[i / 64] |= ((b & 1) as u64) << (i % 64);
        }
        let mut word = info.iter().map(|b| b & 1).collect::<Vec<u8>>();
        word.extend(self.generator.iter().map(|g| {
            let ones: u32 = g.iter().zip(&packed).map(|(a, b)| (a & b).count_ones()).sum();
            (ones & 1) as u8
        }));
        Ok(word)
    }

    /// Sum-product decoding of channel LLRs (`log P(0)/P(1)`). Returns the
    /// hard-decision info bits and whether the syndrome reached zero.
    pub fn decode(&self, llr: &[f64], max_iters: usize) -> Result<(Vec<u8>, bool)> {
        let n = self.n();
        if llr.len() != n {
            return Err(Error::shape(format!("LDPC block takes {n} LLRs, got {}", llr.len())));
        }
        let e = self.edge_var.len();
        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| llr[v as usize]).collect();
        let mut c2v = vec![0.0; e];
        let mut hard: Vec<u8> = llr.iter().map(|&l| (l < 0.0) as u8).collect();
        if self.h.syndrome_is_zero(&hard) {
            return Ok((hard[..self.k].to_vec(), true));
        }
        let mut tanhs = Vec::new();
        let mut total = vec![0.0; n];
        for _ in 0..max_iters {
            // check update: tanh rule with leave-one-out products
            for c in 0..self.h.m() {
                let (s, t) = (self.check_start[c], self.check_start[c + 1]);
                tanhs.clear();
                tanhs.extend(v2c[s..t].iter().map(|&m| (0.5 * m).tanh()));
                for i in 0..t - s {
                    let mut p = 1.0;
                    for (j, &th) in tanhs.iter().enumerate() {
                        if j != i {
                            p *= th;
                        }
                    }
                    let p = p.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                    c2v[s + i] = 2.0 * p.atanh();
                }
            }
            // variable update
            total.copy_from_slice(llr);
            for (ei, &v) in self.edge_var.iter().enumerate() {
                total[v as usize] += c2v[ei];
            }
            for (ei, &v) in self.edge_var.iter().enumerate() {
                v2c[ei] = total[v as usize] - c2v[ei];
            }
            for (h, &t) in hard.iter_mut().zip(&total) {
                *h = (t < 0.0) as u8;
            }
            if self.h.syndrome_is_zero(&hard) {
                return Ok((hard[..self.k].to_vec(), true));
            }
        }
        Ok((hard[..self.k].to_vec(), false))
    }

    #[cfg(test)]
    fn var_degree(&self, v: usize) -> usize {
        self.edge_var.iter().filter(|&&e| e as usize == v).count()
    }
}
