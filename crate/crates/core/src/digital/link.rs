use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::channel::{add_awgn_real, awgn_capacity, pack_complex, unpack_complex, NoiseSpec};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamId};

use super::ldpc::{LdpcCode, ParityMatrix};
use super::qam::{qam_demodulate_llr, qam_modulate, QamOrder};

/// Channel code plus constellation used on a digital hop.
#[derive(Debug, Clone)]
pub struct CodedModScheme {
    pub code: Arc<LdpcCode>,
    pub order: QamOrder,
    pub max_iters: usize,
}

impl CodedModScheme {
    pub fn new(code: Arc<LdpcCode>, order: QamOrder, max_iters: usize) -> Result<Self> {
        if !code.n().is_multiple_of(order.bits_per_symbol()) {
            return Err(Error::InvalidArgument(format!(
                "block length {} does not fill {}-QAM symbols",
                code.n(),
                u32::from(order)
            )));
        }
        Ok(CodedModScheme { code, order, max_iters })
    }

    /// Built-in rate-1/2 code with the given constellation and 50 BP iterations.
    pub fn standard(order: QamOrder) -> Self {
        CodedModScheme::new(LdpcCode::standard(), order, 50).expect("1536 fills any order")
    }

    /// Information bits per complex channel use.
    pub fn spectral_efficiency(&self) -> f64 {
        self.code.rate() * self.order.bits_per_symbol() as f64
    }

    pub fn symbols_per_block(&self) -> usize {
        self.code.n() / self.order.bits_per_symbol()
    }

    /// One block through encoder, modulator, AWGN, demapper and BP.
    /// Returns the decoded info bits and the convergence flag.
    fn transmit_block(&self, info: &[u8], sigma2: f64, rng: &mut crate::rng::Rng) -> Result<(Vec<u8>, bool)> {
        let cw = self.code.encode(info)?;
        let x = qam_modulate::<f64>(&cw, self.order)?;
        let mut raw = unpack_complex(&x);
        add_awgn_real(&mut raw, sigma2, rng);
        let y = pack_complex(&raw)?;
        let llr = qam_demodulate_llr(y.symbols(), self.order, sigma2);
        self.code.decode(&llr, self.max_iters)
    }
}

/// Config-file description of a coded scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodedModConfig {
    #[serde(default = "default_order")]
    pub order: QamOrder,
    /// Parity-check matrix in the sparse text format; the built-in code if absent.
    #[serde(default)]
    pub parity_file: Option<PathBuf>,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
}

fn default_order() -> QamOrder {
    QamOrder::Qam16
}

fn default_iters() -> usize {
    50
}

impl Default for CodedModConfig {
    fn default() -> Self {
        CodedModConfig {
            order: default_order(),
            parity_file: None,
            max_iters: default_iters(),
        }
    }
}

impl CodedModConfig {
    pub fn build(&self) -> Result<CodedModScheme> {
        let code = match &self.parity_file {
            None => LdpcCode::standard(),
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                Arc::new(LdpcCode::new(ParityMatrix::from_text(&text)?)?)
            }
        };
        CodedModScheme::new(code, self.order, self.max_iters)
    }
}

/// How bits cross a digital hop.
#[derive(Debug, Clone)]
pub enum LinkMode {
    /// Error-free pipe charging `bits / efficiency` channel uses.
    Ideal { efficiency: f64 },
    Coded(Arc<CodedModScheme>),
}

impl LinkMode {
    pub fn spectral_efficiency(&self) -> f64 {
        match self {
            LinkMode::Ideal { efficiency } => *efficiency,
            LinkMode::Coded(s) => s.spectral_efficiency(),
        }
    }

    pub fn is_ideal(&self) -> bool {
        matches!(self, LinkMode::Ideal { .. })
    }

    /// Rejects operating points whose rate is not below the AWGN capacity.
    pub fn check_capacity(&self, snr_db: f64) -> Result<()> {
        let r = self.spectral_efficiency();
        let c = awgn_capacity(snr_db);
        if r <= 0.0 || r >= c {
            return Err(Error::InvalidArgument(format!(
                "spectral efficiency {r} is not below capacity {c:.3} at {snr_db} dB"
            )));
        }
        Ok(())
    }

    /// Channel uses charged for `bits` payload bits: the expectation
    /// `bits / R` for the ideal pipe, whole blocks for coded links.
    pub fn channel_uses(&self, bits: usize) -> f64 {
        match self {
            LinkMode::Ideal { efficiency } => bits as f64 / efficiency,
            LinkMode::Coded(s) => (bits.div_ceil(s.code.k()) * s.symbols_per_block()) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkKind {
    Ideal,
    Coded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub bits_in: usize,
    pub channel_uses: f64,
    pub blocks: usize,
    pub block_errors: usize,
    /// `block_errors / blocks`; zero when no blocks were sent.
    pub per: f64,
    pub mode: LinkKind,
}

/// Carry `bits` over one digital hop.
///
/// Coded payloads are zero-padded to whole blocks; block `b` draws its noise
/// from `stream(seed, StreamId::block(0, b))`.
pub fn link_transmit(bits: &[u8], mode: &LinkMode, noise: &NoiseSpec, seed: u64) -> Result<(Vec<u8>, LinkReport)> {
    match mode {
        LinkMode::Ideal { .. } => Ok((
            bits.to_vec(),
            LinkReport {
                bits_in: bits.len(),
                channel_uses: mode.channel_uses(bits.len()),
                blocks: 0,
                block_errors: 0,
                per: 0.0,
                mode: LinkKind::Ideal,
            },
        )),
        LinkMode::Coded(scheme) => {
            let k = scheme.code.k();
            let blocks = bits.len().div_ceil(k);
            if blocks > u16::MAX as usize + 1 {
                return Err(Error::InvalidArgument(format!("payload of {} bits is too long", bits.len())));
            }
            let mut out = Vec::with_capacity(blocks * k);
            let mut errors = 0;
            for (b, chunk) in bits.chunks(k).enumerate() {
                let mut info = chunk.to_vec();
                info.resize(k, 0);
                let mut rng = stream(seed, StreamId::block(0, b as u16));
                let (dec, _) = scheme.transmit_block(&info, noise.sigma2, &mut rng)?;
                if dec != info {
                    errors += 1;
                }
                out.extend_from_slice(&dec[..chunk.len()]);
            }
            Ok((
                out,
                LinkReport {
                    bits_in: bits.len(),
                    channel_uses: mode.channel_uses(bits.len()),
                    blocks,
                    block_errors: errors,
                    per: if blocks == 0 { 0.0 } else { errors as f64 / blocks as f64 },
                    mode: LinkKind::Coded,
                },
            ))
        }
    }
}

/// Fraction of `n_blocks` random blocks with any info-bit error after decoding.
pub fn measure_per(scheme: &CodedModScheme, snr_db: f64, n_blocks: usize, seed: u64) -> Result<f64> {
    if n_blocks == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let sigma2 = NoiseSpec::from_snr_db(snr_db).sigma2;
    let k = scheme.code.k();
    let mut errors = 0usize;
    for b in 0..n_blocks {
        let mut rng = stream(seed, StreamId::block(b as u64, 0));
        let info: Vec<u8> = (0..k).map(|_| rng.gen_range(0..2)).collect();
        let (dec, _) = scheme.transmit_block(&info, sigma2, &mut rng)?;
        if dec != info {
            errors += 1;
        }
    }
    Ok(errors as f64 / n_blocks as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_pipe_accounting_and_exactness() {
        let mode = LinkMode::Ideal { efficiency: 2.0 };
        let bits: Vec<u8> = (0..727).map(|i| (i * 7 % 3 == 0) as u8).collect();
        let noise = NoiseSpec::from_snr_db(10.0);
        let (out, rep) = link_transmit(&bits, &mode, &noise, 1).unwrap();
        assert_eq!(out, bits);
        assert_eq!(rep.channel_uses, 363.5);
        assert_eq!(rep.channel_uses * 2.0, bits.len() as f64);
        let mut cur = bits.clone();
        for hop in 0..5 {
            cur = link_transmit(&cur, &mode, &noise, hop).unwrap().0;
        }
        assert_eq!(cur, bits);
        assert_eq!(link_transmit(&[], &mode, &noise, 0).unwrap().0, Vec::<u8>::new());
    }

    #[test]
    fn default_operating_points_are_below_capacity() {
        let rs = LinkMode::Coded(Arc::new(CodedModScheme::standard(QamOrder::Qam4)));
        let rn = LinkMode::Coded(Arc::new(CodedModScheme::standard(QamOrder::Qam16)));
        assert_eq!(rs.spectral_efficiency(), 1.0);
        assert_eq!(rn.spectral_efficiency(), 2.0);
        rs.check_capacity(2.0).unwrap();
        rn.check_capacity(10.0).unwrap();
        assert!(rn.check_capacity(2.0).is_err());
    }

    #[test]
    fn coded_link_pads_and_reports() {
        let scheme = Arc::new(CodedModScheme::standard(QamOrder::Qam16));
        let mode = LinkMode::Coded(scheme);
        let bits: Vec<u8> = (0..1000).map(|i| (i % 5 == 1) as u8).collect();
        let (out, rep) = link_transmit(&bits, &mode, &NoiseSpec::noiseless(), 3).unwrap();
        assert_eq!(out, bits);
        assert_eq!(rep.blocks, 2);
        assert_eq!(rep.channel_uses, 768.0);
        assert_eq!(rep.per, 0.0);
        let (out, rep) = link_transmit(&bits, &mode, &NoiseSpec::from_snr_db(12.0), 3).unwrap();
        assert_eq!(out, bits);
        assert_eq!(rep.block_errors, 0);
    }

    #[test]
    fn per_noiseless_and_monotone() {
        let scheme = CodedModScheme::standard(QamOrder::Qam4);
        assert_eq!(measure_per(&scheme, 60.0, 20, 1).unwrap(), 0.0);
        let pers: Vec<f64> = [-1.0, 0.0, 1.0, 2.5]
            .iter()
            .map(|&snr| measure_per(&scheme, snr, 200, 5).unwrap())
            .collect();
        assert!(pers.windows(2).all(|w| w[1] <= w[0]), "{pers:?}");
        assert!(measure_per(&scheme, 2.0, 0, 1).is_err());
    }

    #[test]
    fn config_loads_parity_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.txt");
        std::fs::write(&path, LdpcCode::standard().parity_matrix().to_text()).unwrap();
        let cfg = CodedModConfig {
            order: QamOrder::Qam4,
            parity_file: Some(path),
            max_iters: 20,
        };
        let s = cfg.build().unwrap();
        assert_eq!(s.code.n(), 1536);
        let toml_cfg: CodedModConfig = serde_json::from_str(r#"{"order": 16}"#).unwrap();
        assert_eq!(toml_cfg.order, QamOrder::Qam16);
        assert!(serde_json::from_str::<CodedModConfig>(r#"{"order": 8}"#).is_err());
    }
}
