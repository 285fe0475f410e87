//! The hybrid scheme: analog first hop into `R_1`, learned compression at
//! `R_1`, lossless digital forwarding over the core network, decompression
//! at `D`.

use ndarray::Array4;
use serde::{Deserialize, Serialize};

use crate::channel::{add_awgn_real, snr_db_to_sigma2};
use crate::compressor::{CompressorConfig, HyperpriorCompressor};
use crate::deepjscc::{loss_af, mse_grad, AnalogChainModel, JsccConfig, JsccDecoder, JsccEncoder};
use crate::digital::{link_transmit, LinkReport};
use crate::entropy::{bits_to_bytes, bytes_to_bits, Bitstream};
use crate::error::{Error, Result};
use crate::hops::{HopChain, LinkSpec, Transport};
use crate::image::ImageTensor;
use crate::nn::{HasParams, LossTerms, Module, ParamMuts, ParamRefs, Trainable};
use crate::rng::{self, Rng, StreamId};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JscConfig {
    pub jscc: JsccConfig,
    pub compressor: CompressorConfig,
    pub lambda: f64,
    /// First-hop SNR used in training.
    pub snr_s_db: f64,
    /// Keep `f_s` and `f_d` fixed while the compressor trains.
    pub freeze_jscc: bool,
}

impl JscConfig {
    pub fn validate(&self) -> Result<()> {
        self.jscc.validate()?;
        self.compressor.validate()?;
        let j = &self.jscc;
        let c = &self.compressor;
        if (j.channels, j.height, j.width) != (c.channels, c.height, c.width) {
            return Err(Error::InvalidArgument("codec and compressor image sizes differ".into()));
        }
        if self.lambda <= 0.0 {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

struct TrainCache {
    trained_jscc: bool,
}

/// `f_s`, `f_d` (run at `R_1`) and the compressor `g_c` / decompressor.
pub struct JscModel<T> {
    cfg: JscConfig,
    pub encoder: JsccEncoder<T>,
    pub decoder: JsccDecoder<T>,
    pub compressor: HyperpriorCompressor<T>,
    cache: Option<TrainCache>,
}

/// Result of sending one image over a hybrid route.
#[derive(Debug, Clone)]
pub struct HybridOutput<T> {
    pub image: ImageTensor<T>,
    /// `#b_1`: entropy-coded payload (`b_v` and `b_z`) in bits.
    pub payload_bits: usize,
    /// Share of `payload_bits` spent on `b_z`; the rest is `b_v`.
    pub bits_z: usize,
    /// Bits handed to the transport, container header included.
    pub transmitted_bits: usize,
    pub links: Vec<LinkReport>,
    /// The received stream could not be parsed or decoded; `image` is then
    /// mid-gray.
    pub decode_failed: bool,
}

impl<T: Scalar> JscModel<T> {
    pub fn new(cfg: JscConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut r = rng::stream(seed, StreamId::init(0));
        let encoder = JsccEncoder::new(cfg.jscc, &mut r);
        let decoder = JsccDecoder::new(cfg.jscc, cfg.jscc.c_out, &mut r);
        let mut r = rng::stream(seed, StreamId::init(1));
        let compressor = HyperpriorCompressor::new(cfg.compressor, &mut r)?;
        Ok(JscModel {
            cfg,
            encoder,
            decoder,
            compressor,
            cache: None,
        })
    }

    /// Start from a trained point-to-point codec (a one-hop analog model).
    pub fn from_point_to_point(cfg: JscConfig, p2p: AnalogChainModel<T>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if p2p.config().n_hops != 1 || p2p.config().jscc != cfg.jscc {
            return Err(Error::InvalidArgument(
                "initialization needs a one-hop model with the same codec config".into(),
            ));
        }
        let mut r = rng::stream(seed, StreamId::init(1));
        let compressor = HyperpriorCompressor::new(cfg.compressor, &mut r)?;
        Ok(JscModel {
            cfg,
            encoder: p2p.encoder,
            decoder: p2p.decoder,
            compressor,
            cache: None,
        })
    }

    pub fn config(&self) -> &JscConfig {
        &self.cfg
    }

    pub fn set_lambda(&mut self, lambda: f64) {
        self.cfg.lambda = lambda;
    }

    /// `S~ = f_d(f_s(S) + w)` at `R_1`; sample `b` uses noise stream
    /// `hop(first_index + b, 0)`.
    pub fn relay_reconstruct(&self, batch: &Array4<T>, sigma2_s: f64, seed: u64, first_index: u64) -> Array4<T> {
        let mut x = self.encoder.infer(batch);
        for (b, mut s) in x.axis_iter_mut(ndarray::Axis(0)).enumerate() {
            let mut r = rng::stream(seed, StreamId::hop(first_index + b as u64, 0));
            add_awgn_real(s.as_slice_mut().expect("standard layout"), sigma2_s, &mut r);
        }
        self.decoder.infer(&x)
    }

    /// Send one image over `hops` (analog first hop, digital after).
    /// Core hop `i` draws its channel from `item_seed(seed, i)`.
    pub fn run(&self, image: &ImageTensor<T>, hops: &HopChain, seed: u64) -> Result<HybridOutput<T>> {
        let Some(first) = hops.links.first() else {
            return Err(Error::InvalidArgument("empty hop chain".into()));
        };
        if !first.is_analog() || hops.core().iter().any(|l| l.is_analog()) {
            return Err(Error::InvalidArgument(
                "hybrid routes need an analog first hop and digital core hops".into(),
            ));
        }
        let s_tilde = self.relay_reconstruct(&image.clone().into_batch(), first.noise.sigma2, seed, 0);
        let s_tilde = ImageTensor::clamped(s_tilde.index_axis(ndarray::Axis(0), 0).to_owned());
        if hops.n_hops() == 1 {
            return Ok(HybridOutput {
                image: s_tilde,
                payload_bits: 0,
                bits_z: 0,
                transmitted_bits: 0,
                links: Vec::new(),
                decode_failed: false,
            });
        }
        let stream = self.compressor.compress(&s_tilde)?;
        let payload_bits = stream.payload_bits();
        let bits_z = 8 * stream.b_z.len();
        let (image, transmitted_bits, links, decode_failed) = forward_and_decode(
            &stream.to_bytes(),
            hops.core(),
            seed,
            1,
            |bytes| self.compressor.decompress(&Bitstream::from_bytes(bytes)?),
            (self.cfg.jscc.channels, self.cfg.jscc.height, self.cfg.jscc.width),
        )?;
        Ok(HybridOutput {
            image,
            payload_bits,
            bits_z,
            transmitted_bits,
            links,
            decode_failed,
        })
    }
}

/// Carry `bits` over digital `links` in order. Hop `i` of the slice draws
/// its channel from `item_seed(seed, first_hop + i)`.
pub fn forward_bits(
    mut bits: Vec<u8>,
    links: &[LinkSpec],
    seed: u64,
    first_hop: u64,
) -> Result<(Vec<u8>, Vec<LinkReport>)> {
    let mut reports = Vec::with_capacity(links.len());
    for (i, link) in links.iter().enumerate() {
        let Transport::Digital(mode) = &link.transport else {
            return Err(Error::InvalidArgument("analog hop inside a digital route".into()));
        };
        let (out, report) = link_transmit(&bits, mode, &link.noise, rng::item_seed(seed, first_hop + i as u64))?;
        bits = out;
        reports.push(report);
    }
    Ok((bits, reports))
}

/// Output shown when a received stream cannot be decoded.
pub fn fallback_image<T: Scalar>(dims: (usize, usize, usize)) -> ImageTensor<T> {
    ImageTensor::clamped(ndarray::Array3::from_elem(dims, T::of(0.5)))
}

pub(crate) fn forward_and_decode<T: Scalar>(
    bytes: &[u8],
    links: &[LinkSpec],
    seed: u64,
    first_hop: u64,
    decode: impl Fn(&[u8]) -> Result<ImageTensor<T>>,
    dims: (usize, usize, usize),
) -> Result<(ImageTensor<T>, usize, Vec<LinkReport>, bool)> {
    let bits = bytes_to_bits(bytes);
    let transmitted = bits.len();
    let (bits, reports) = forward_bits(bits, links, seed, first_hop)?;
    Ok(match decode(&bits_to_bytes(&bits)) {
        Ok(img) => (img, transmitted, reports, false),
        Err(_) => (fallback_image(dims), transmitted, reports, true),
    })
}

impl<T: Scalar> HasParams<T> for JscModel<T> {
    fn collect_params<'a>(&'a self, out: &mut ParamRefs<'a, T>) {
        self.encoder.params("encoder", out);
        self.decoder.params("decoder", out);
        let mut ps = Vec::new();
        self.compressor.collect_params(&mut ps);
        out.extend(ps.into_iter().map(|(n, p)| (crate::nn::join("compressor", &n), p)));
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut ParamMuts<'a, T>) {
        self.encoder.params_mut("encoder", out);
        self.decoder.params_mut("decoder", out);
        let mut ps = Vec::new();
        self.compressor.collect_params_mut(&mut ps);
        out.extend(ps.into_iter().map(|(n, p)| (crate::nn::join("compressor", &n), p)));
    }
}

impl<T: Scalar> Trainable<T> for JscModel<T> {
    fn train_batch(&mut self, batch: &Array4<T>, rng: &mut Rng) -> LossTerms {
        let sigma2 = snr_db_to_sigma2(self.cfg.snr_s_db);
        let trained_jscc = !self.cfg.freeze_jscc;
        let mut x = if trained_jscc {
            self.encoder.forward(batch)
        } else {
            self.encoder.infer(batch)
        };
        add_awgn_real(x.as_slice_mut().expect("standard layout"), sigma2, rng);
        let s_tilde = if trained_jscc {
            self.decoder.forward(&x)
        } else {
            self.decoder.infer(&x)
        };
        self.cache = Some(TrainCache { trained_jscc });
        let (s_hat, rate) = self.compressor.forward_train(&s_tilde, rng);
        let mse = loss_af(batch, &s_hat).expect("shapes match");
        let d_s_tilde = self.compressor.backward_train(&mse_grad(batch, &s_hat, self.cfg.lambda));
        let cache = self.cache.take().expect("set above");
        if cache.trained_jscc {
            let dy = self.decoder.backward(&d_s_tilde);
            self.encoder.backward(&dy);
        }
        LossTerms {
            loss: self.cfg.lambda * mse + rate.bpp,
            mse,
            bpp: rate.bpp,
        }
    }

    fn eval_batch(&self, batch: &Array4<T>, rng: &mut Rng) -> LossTerms {
        let sigma2 = snr_db_to_sigma2(self.cfg.snr_s_db);
        let seed = rand::Rng::gen::<u64>(rng);
        let s_tilde = self
            .relay_reconstruct(batch, sigma2, seed, 0)
            .mapv(|v| v.clamp(T::zero(), T::one()));
        let (s_hat, rate) = self.compressor.estimate(&s_tilde).expect("validated shapes");
        let mse = loss_af(batch, &s_hat.mapv(|v| v.clamp(T::zero(), T::one()))).expect("shapes match");
        LossTerms {
            loss: self.cfg.lambda * mse + rate.bpp,
            mse,
            bpp: rate.bpp,
        }
    }
}
