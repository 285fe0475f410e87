//! Comparison schemes: naive quantization at `R_1` (including the 32-bit
//! bound), the fully digital pipeline, and the AF effective SNR.

mod lloyd;

pub use lloyd::{lloyd_design, lloyd_design_traced, ScalarQuantizer};

use serde::{Deserialize, Serialize};

use crate::channel::add_awgn_real;
use crate::compressor::HyperpriorCompressor;
use crate::deepjscc::{JsccDecoder, JsccEncoder};
use crate::digital::LinkReport;
use crate::entropy::Bitstream;
use crate::error::{Error, Result};
use crate::hops::HopChain;
use crate::hybrid::{forward_and_decode, forward_bits};
use crate::image::ImageTensor;
use crate::nn::Module;
use crate::rng::{self, StreamId};
use crate::scalar::Scalar;

/// `1 / sum_i sigma_i^2 prod_{j<i} (1 + sigma_j^2)`: the single-hop SNR
/// equivalent to an amplify-and-forward chain.
pub fn effective_snr_af(sigma2: &[f64]) -> Result<f64> {
    if sigma2.is_empty() {
        return Err(Error::InvalidArgument("effective SNR of an empty chain".into()));
    }
    let mut gain = 1.0;
    let mut total = 0.0;
    for &s in sigma2 {
        total += s * gain;
        gain *= 1.0 + s;
    }
    Ok(1.0 / total)
}

/// Per-real-dimension quantizer applied to `y_1` at `R_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NaiveQuantizer {
    Lloyd(ScalarQuantizer),
    /// IEEE single precision, 32 bits per real dimension.
    Float32,
}

impl NaiveQuantizer {
    pub fn bits_per_real(&self) -> u32 {
        match self {
            NaiveQuantizer::Lloyd(q) => q.bits(),
            NaiveQuantizer::Float32 => 32,
        }
    }

    fn encode(&self, values: &[f64]) -> Vec<u8> {
        let m = self.bits_per_real();
        let mut bits = Vec::with_capacity(values.len() * m as usize);
        for &v in values {
            let word = match self {
                NaiveQuantizer::Lloyd(q) => q.index(v),
                NaiveQuantizer::Float32 => (v as f32).to_bits(),
            };
            bits.extend((0..m).rev().map(|i| ((word >> i) & 1) as u8));
        }
        bits
    }

    fn decode(&self, bits: &[u8]) -> Vec<f64> {
        bits.chunks_exact(self.bits_per_real() as usize)
            .map(|c| {
                let word = c.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
                match self {
                    NaiveQuantizer::Lloyd(q) => q.level(word),
                    NaiveQuantizer::Float32 => f32::from_bits(word) as f64,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct NaiveOutput<T> {
    pub image: ImageTensor<T>,
    /// `2 k m`.
    pub bits_used: usize,
    pub links: Vec<LinkReport>,
}

/// The real components of `y_1 = f_s(S) + w_1`, with the first-hop noise
/// drawn from `stream(seed, hop(item, 0))`.
pub fn received_components<T: Scalar>(
    image: &ImageTensor<T>,
    encoder: &JsccEncoder<T>,
    sigma2_s: f64,
    seed: u64,
    item: u64,
) -> Vec<T> {
    let mut y = encoder.infer(&image.clone().into_batch()).into_raw_vec_and_offset().0;
    let mut r = rng::stream(seed, StreamId::hop(item, 0));
    add_awgn_real(&mut y, sigma2_s, &mut r);
    y
}

/// Quantize every real component of `y_1` at `R_1`, forward the indices
/// over the digital core, dequantize and decode with `f_d` at `D`.
pub fn naive_quant_run<T: Scalar>(
    image: &ImageTensor<T>,
    hops: &HopChain,
    quantizer: &NaiveQuantizer,
    encoder: &JsccEncoder<T>,
    decoder: &JsccDecoder<T>,
    seed: u64,
) -> Result<NaiveOutput<T>> {
    let Some(first) = hops.links.first() else {
        return Err(Error::InvalidArgument("empty hop chain".into()));
    };
    if !first.is_analog() {
        return Err(Error::InvalidArgument("naive quantization needs an analog first hop".into()));
    }
    let y = received_components(image, encoder, first.noise.sigma2, seed, 0);
    let values: Vec<f64> = y.iter().map(|v| v.as_f64()).collect();
    let bits = quantizer.encode(&values);
    let bits_used = bits.len();
    let (bits, links) = forward_bits(bits, hops.core(), seed, 1)?;
    let y_hat: Vec<T> = quantizer.decode(&bits).into_iter().map(T::of).collect();
    let cfg = encoder.config();
    let (h, w) = cfg.grid();
    let input = ndarray::Array4::from_shape_vec((1, cfg.c_out, h, w), y_hat).map_err(|e| Error::shape(e.to_string()))?;
    let out = decoder.infer(&input);
    Ok(NaiveOutput {
        image: ImageTensor::from_batch(&out, 0),
        bits_used,
        links,
    })
}

/// Image codec used by the fully digital baseline.
pub trait ImageCodec<T: Scalar> {
    fn name(&self) -> &str;

    fn encode(&self, image: &ImageTensor<T>) -> Result<Vec<u8>>;

    fn decode(&self, bytes: &[u8]) -> Result<ImageTensor<T>>;
}

impl<T: Scalar> ImageCodec<T> for HyperpriorCompressor<T> {
    fn name(&self) -> &str {
        "hyperprior"
    }

    fn encode(&self, image: &ImageTensor<T>) -> Result<Vec<u8>> {
        Ok(self.compress(image)?.to_bytes())
    }

    fn decode(&self, bytes: &[u8]) -> Result<ImageTensor<T>> {
        self.decompress(&Bitstream::from_bytes(bytes)?)
    }
}

#[derive(Debug, Clone)]
pub struct DigitalOutput<T> {
    pub image: ImageTensor<T>,
    /// Encoded image size in bits.
    pub bits: usize,
    pub links: Vec<LinkReport>,
    pub decode_failed: bool,
}

/// Compress at `S`, carry the bits over every (digital) hop, decompress at
/// `D`. A stream that no longer decodes yields a mid-gray image.
pub fn digital_baseline_run<T: Scalar>(
    image: &ImageTensor<T>,
    hops: &HopChain,
    codec: &dyn ImageCodec<T>,
    seed: u64,
) -> Result<DigitalOutput<T>> {
    if hops.links.is_empty() || hops.links.iter().any(|l| l.is_analog()) {
        return Err(Error::InvalidArgument("the digital baseline needs digital hops only".into()));
    }
    let bytes = codec.encode(image)?;
    let dims = image.dims();
    let (image, bits, links, decode_failed) =
        forward_and_decode(&bytes, &hops.links, seed, 0, |b| codec.decode(b), dims)?;
    Ok(DigitalOutput {
        image,
        bits,
        links,
        decode_failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{awgn_apply_with, normalize_power, NoiseSpec};
    use crate::compressor::CompressorConfig;
    use crate::deepjscc::{af_scale, JsccConfig};
    use crate::digital::{CodedModScheme, LinkMode, QamOrder};
    use rand::Rng as _;
    use std::sync::Arc;

    #[test]
    fn effective_snr_closed_forms() {
        assert!((effective_snr_af(&[0.631]).unwrap() - 1.0 / 0.631).abs() < 1e-12);
        let two = effective_snr_af(&[0.6310, 0.1]).unwrap();
        assert!((two - 1.2593).abs() < 1e-4, "{two}");
        assert!((10.0 * two.log10() - 1.00).abs() < 0.005);
        assert!(effective_snr_af(&[]).is_err());
    }

    #[test]
    fn af_chain_matches_effective_snr() {
        let sigma2 = [0.631, 0.1, 0.316];
        let mut r = rng::stream(2, StreamId::aux(0));
        let k = 64;
        let trials = 20_000;
        let (mut err, mut n) = (0.0, 0usize);
        for _ in 0..trials {
            let raw: Vec<f64> = (0..2 * k).map(|_| r.gen_range(-1.0..1.0)).collect();
            let x = normalize_power(&raw, k).unwrap();
            let mut y = x.clone();
            let mut gain = 1.0;
            for (i, &s) in sigma2.iter().enumerate() {
                y = awgn_apply_with(&y, &NoiseSpec { snr_db: 0.0, sigma2: s }, &mut r);
                if i + 1 < sigma2.len() {
                    y = af_scale(&y, s);
                    gain *= crate::deepjscc::af_gain(s);
                }
            }
            for (a, b) in y.symbols().iter().zip(x.symbols()) {
                err += (a / gain - b).norm_sqr();
                n += 1;
            }
        }
        let measured = err / n as f64;
        let expected = 1.0 / effective_snr_af(&sigma2).unwrap();
        assert!((measured / expected - 1.0).abs() < 0.01, "{measured} vs {expected}");
    }

    fn codec() -> (JsccEncoder<f32>, JsccDecoder<f32>) {
        let cfg = JsccConfig {
            channels: 3,
            height: 16,
            width: 16,
            c_feat: 4,
            c_out: 4,
            res_blocks: 1,
        };
        let mut r = rng::stream(1, StreamId::init(0));
        (JsccEncoder::new(cfg, &mut r), JsccDecoder::new(cfg, 4, &mut r))
    }

    fn image(seed: u64) -> ImageTensor<f32> {
        let mut r = rng::stream(seed, StreamId::aux(7));
        ImageTensor::clamped(ndarray::Array3::from_shape_fn((3, 16, 16), |_| r.gen_range(0.0..1.0)))
    }

    #[test]
    fn float32_forwarding_is_the_single_hop_codec() {
        let (enc, dec) = codec();
        let img = image(1);
        let core = LinkMode::Ideal { efficiency: 2.0 };
        for n in [2, 5] {
            let out = naive_quant_run(&img, &HopChain::hybrid(2.0, 10.0, n, core.clone()), &NaiveQuantizer::Float32, &enc, &dec, 3)
                .unwrap();
            let y = received_components(&img, &enc, crate::channel::snr_db_to_sigma2(2.0), 3, 0);
            let y = crate::channel::pack_complex(&y).unwrap();
            assert_eq!(out.image, dec.decode(&y).unwrap());
            assert_eq!(out.bits_used, 2 * enc.config().k() * 32);
        }
    }

    #[test]
    fn lloyd_forwarding_is_hop_flat_and_lossy() {
        let (enc, dec) = codec();
        let img = image(2);
        let sigma2 = crate::channel::snr_db_to_sigma2(2.0);
        let samples: Vec<f64> = (0..200)
            .flat_map(|i| received_components(&image(100 + i), &enc, sigma2, 9, i))
            .map(|v| v as f64)
            .collect();
        let q = NaiveQuantizer::Lloyd(lloyd_design(&samples, 4, 1e-9, 300).unwrap());
        let core = LinkMode::Ideal { efficiency: 2.0 };
        let a = naive_quant_run(&img, &HopChain::hybrid(2.0, 10.0, 2, core.clone()), &q, &enc, &dec, 4).unwrap();
        let b = naive_quant_run(&img, &HopChain::hybrid(2.0, 10.0, 5, core), &q, &enc, &dec, 4).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.bits_used, 2 * 32 * 4);
        assert_eq!(b.links.len(), 4);
    }

    #[test]
    fn digital_baseline_hop_flat_and_cliff() {
        let cfg = CompressorConfig {
            channels: 3,
            height: 16,
            width: 16,
            c_feat: 4,
            c_hyper: 4,
            c_z: 4,
            c_v: 3,
            res_blocks: 1,
        };
        let comp = HyperpriorCompressor::<f32>::new(cfg, &mut rng::stream(1, StreamId::init(1))).unwrap();
        let img = image(3);
        let ideal_s = LinkMode::Ideal { efficiency: 1.0 };
        let ideal_n = LinkMode::Ideal { efficiency: 2.0 };
        let two = digital_baseline_run(&img, &HopChain::digital(2.0, 10.0, 2, ideal_s.clone(), ideal_n.clone()), &comp, 1).unwrap();
        let five = digital_baseline_run(&img, &HopChain::digital(2.0, 10.0, 5, ideal_s, ideal_n), &comp, 1).unwrap();
        assert_eq!(two.image, five.image);
        assert!(!two.decode_failed);
        assert_eq!(two.image, comp.decompress(&comp.compress(&img).unwrap()).unwrap());

        let coded_s = LinkMode::Coded(Arc::new(CodedModScheme::standard(QamOrder::Qam4)));
        let coded_n = LinkMode::Coded(Arc::new(CodedModScheme::standard(QamOrder::Qam16)));
        let good = digital_baseline_run(&img, &HopChain::digital(2.0, 10.0, 3, coded_s.clone(), coded_n.clone()), &comp, 1).unwrap();
        assert_eq!(good.image, two.image);
        let bad = digital_baseline_run(&img, &HopChain::digital(-4.0, 10.0, 3, coded_s, coded_n), &comp, 1).unwrap();
        assert_eq!(bad.links[0].per, 1.0);
        assert!(bad.decode_failed || bad.image != two.image);
        assert!(digital_baseline_run(&img, &HopChain::analog(2.0, 10.0, 2), &comp, 1).is_err());
    }
}
