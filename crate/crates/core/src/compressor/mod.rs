//! Learned hyperprior compression of the relay reconstruction `S~` into the
//! digital payload `b_1 = (b_v, b_z)`, and the matching decompressor.

mod factorized;
mod likelihood;

pub use factorized::{build_cdf_factorized, FactorizedModel};
pub use likelihood::{
    gaussian_bin, gaussian_bin_grad, gaussian_uniform_likelihood, scale_from_raw, P_MIN, SIGMA_MIN,
};

use ndarray::{s, Array4, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::deepjscc::{downsampling_backbone, mse_grad, upsampling_backbone, JsccConfig};
use crate::entropy::{build_cdf_gaussian, range_decode, range_encode, Bitstream, CdfTable, LatentDims, SymbolRange};
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::nn::{
    Conv2d, HasParams, LeakyRelu, LossTerms, Module, ParamMuts, ParamRefs, PixelShuffle, Sequential, Trainable,
};
use crate::rng::{self, Rng, StreamId};
use crate::scalar::Scalar;
use likelihood::{neg_log2_grad, scale_from_raw_grad};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressorConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Hidden width of `g_a` and `g_s`.
    pub c_feat: usize,
    /// Hidden width of `h_a` and `h_s`.
    pub c_hyper: usize,
    pub c_z: usize,
    pub c_v: usize,
    pub res_blocks: usize,
}

impl CompressorConfig {
    /// CIFAR-10 sizes: `C_z = 256`, `C_v = 192`.
    pub fn cifar() -> Self {
        Self::for_images(&JsccConfig::cifar(), 256, 192)
    }

    pub fn for_images(jscc: &JsccConfig, c_z: usize, c_v: usize) -> Self {
        CompressorConfig {
            channels: jscc.channels,
            height: jscc.height,
            width: jscc.width,
            c_feat: jscc.c_feat,
            c_hyper: c_v,
            c_z,
            c_v,
            res_blocks: jscc.res_blocks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.height.is_multiple_of(16) || !self.width.is_multiple_of(16) || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image size {}x{} must be a positive multiple of 16",
                self.height, self.width
            )));
        }
        if [self.channels, self.c_feat, self.c_hyper, self.c_z, self.c_v].contains(&0) {
            return Err(Error::InvalidArgument("channel counts must be positive".into()));
        }
        if [self.height, self.width, self.c_z, self.c_v].iter().any(|&d| d > u16::MAX as usize) {
            return Err(Error::InvalidArgument("dimensions exceed the bitstream header".into()));
        }
        Ok(())
    }

    /// `(C_z, H/4, W/4)`.
    pub fn z_dims(&self) -> (usize, usize, usize) {
        (self.c_z, self.height / 4, self.width / 4)
    }

    /// `(C_v, H/16, W/16)`.
    pub fn v_dims(&self) -> (usize, usize, usize) {
        (self.c_v, self.height / 16, self.width / 16)
    }

    fn latent_dims(&self) -> LatentDims {
        LatentDims {
            height: self.height as u16,
            width: self.width as u16,
            c_z: self.c_z as u16,
            c_v: self.c_v as u16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantMode {
    /// Additive `U(-1/2, 1/2)` noise (training surrogate).
    Noise,
    /// Round to nearest, ties to even.
    Round,
}

pub fn quantize<T: Scalar>(t: &Array4<T>, mode: QuantMode, rng: &mut Rng) -> Array4<T> {
    match mode {
        QuantMode::Round => t.mapv(|v| T::of(v.as_f64().round_ties_even())),
        QuantMode::Noise => t.mapv(|v| v + T::of(rng.gen_range(-0.5..0.5))),
    }
}

/// Bits per pixel split by latent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rate {
    pub bpp: f64,
    pub bpp_z: f64,
    pub bpp_v: f64,
}

/// `I_z = -sum(log2 p_z) / (H W)`, likewise `I_v`, and `I = I_z + I_v`.
pub fn rate_bpp(p_z: &[f64], p_v: &[f64], height: usize, width: usize) -> Result<Rate> {
    let bits = |p: &[f64]| -> Result<f64> {
        p.iter().try_fold(0.0, |acc, &x| {
            if x > 0.0 && x <= 1.0 {
                Ok(acc - x.log2())
            } else {
                Err(Error::InvalidArgument(format!("probability {x} outside (0, 1]")))
            }
        })
    };
    let pixels = (height * width) as f64;
    let bpp_z = bits(p_z)? / pixels;
    let bpp_v = bits(p_v)? / pixels;
    Ok(Rate {
        bpp: bpp_z + bpp_v,
        bpp_z,
        bpp_v,
    })
}

/// `lambda * MSE(S, S_hat) + I` with the MSE averaged over every pixel
/// value on the `[0, 1]` scale.
pub fn jsc_loss<T: Scalar>(s: &Array4<T>, s_hat: &Array4<T>, bpp: f64, lambda: f64) -> Result<f64> {
    if lambda <= 0.0 {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    Ok(lambda * crate::deepjscc::loss_af(s, s_hat)? + bpp)
}

struct TrainCache<T> {
    z_noisy: Array4<T>,
    hs_out: Array4<T>,
    batch: usize,
}

/// Analysis `g_a`, hyper-analysis `h_a`, hyper-synthesis `h_s`, synthesis
/// `g_s` and the factorized prior on `v`.
pub struct HyperpriorCompressor<T> {
    cfg: CompressorConfig,
    g_a: Sequential<T>,
    h_a: Sequential<T>,
    h_s: Sequential<T>,
    g_s: Sequential<T>,
    prior: FactorizedModel<T>,
    cache: Option<TrainCache<T>>,
}

impl<T: Scalar> HyperpriorCompressor<T> {
    pub fn new(cfg: CompressorConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let g_a = downsampling_backbone(cfg.channels, cfg.c_feat, cfg.c_z, cfg.res_blocks, rng);
        let ch = cfg.c_hyper;
        let h_a = Sequential::new()
            .push(Conv2d::new(cfg.c_z, ch, 3, 1, rng))
            .push(LeakyRelu::default())
            .push(Conv2d::new(ch, ch, 3, 2, rng))
            .push(LeakyRelu::default())
            .push(Conv2d::new(ch, cfg.c_v, 3, 2, rng));
        let h_s = Sequential::new()
            .push(Conv2d::new(cfg.c_v, 4 * ch, 3, 1, rng))
            .push(PixelShuffle::new(2))
            .push(LeakyRelu::default())
            .push(Conv2d::new(ch, 4 * ch, 3, 1, rng))
            .push(PixelShuffle::new(2))
            .push(LeakyRelu::default())
            .push(Conv2d::new(ch, 2 * cfg.c_z, 3, 1, rng));
        let g_s = upsampling_backbone(cfg.c_z, cfg.c_feat, cfg.channels, cfg.res_blocks, rng);
        let prior = FactorizedModel::new(cfg.c_v, rng);
        Ok(HyperpriorCompressor {
            cfg,
            g_a,
            h_a,
            h_s,
            g_s,
            prior,
            cache: None,
        })
    }

    pub fn config(&self) -> &CompressorConfig {
        &self.cfg
    }

    pub fn prior(&self) -> &FactorizedModel<T> {
        &self.prior
    }

    fn check_images(&self, x: &Array4<T>) -> Result<()> {
        let c = &self.cfg;
        let (_, xc, xh, xw) = x.dim();
        if (xc, xh, xw) != (c.channels, c.height, c.width) {
            return Err(Error::shape(format!(
                "compressor expects {}x{}x{}, got {xc}x{xh}x{xw}",
                c.channels, c.height, c.width
            )));
        }
        Ok(())
    }

    pub fn analysis(&self, s_tilde: &Array4<T>) -> Result<Array4<T>> {
        self.check_images(s_tilde)?;
        Ok(self.g_a.infer(s_tilde))
    }

    pub fn hyper_analysis(&self, z: &Array4<T>) -> Result<Array4<T>> {
        let (c, h, w) = self.cfg.z_dims();
        if z.dim().1 != c || z.dim().2 != h || z.dim().3 != w {
            return Err(Error::shape(format!("hyper-analysis expects {c}x{h}x{w}, got {:?}", z.dim())));
        }
        Ok(self.h_a.infer(z))
    }

    /// `(mu, sigma)`, each shaped like `z`; `sigma >= SIGMA_MIN`.
    pub fn hyper_synthesis(&self, v_q: &Array4<T>) -> (Array4<T>, Array4<T>) {
        split_params(&self.h_s.infer(v_q), self.cfg.c_z)
    }

    pub fn synthesis(&self, z_q: &Array4<T>) -> Array4<T> {
        self.g_s.infer(z_q)
    }

    /// Inference pass with rounded latents: reconstruction and model rate.
    pub fn estimate(&self, s_tilde: &Array4<T>) -> Result<(Array4<T>, Rate)> {
        let z = self.analysis(s_tilde)?;
        let v = self.h_a.infer(&z);
        let mut unused = rng::stream(0, StreamId::aux(0));
        let z_hat = quantize(&z, QuantMode::Round, &mut unused);
        let v_hat = quantize(&v, QuantMode::Round, &mut unused);
        let (mu, sigma) = self.hyper_synthesis(&v_hat);
        let p_z = gaussian_uniform_likelihood(slice(&z_hat), slice(&mu), slice(&sigma));
        let p_v = self.prior.likelihood(&v_hat);
        let n = s_tilde.dim().0;
        let mut rate = rate_bpp(&p_z, &p_v, self.cfg.height, self.cfg.width)?;
        rate.bpp /= n as f64;
        rate.bpp_z /= n as f64;
        rate.bpp_v /= n as f64;
        Ok((self.g_s.infer(&z_hat), rate))
    }

    /// Noisy-latent training pass. Returns the reconstruction and the batch
    /// rate in bits per pixel (averaged over images).
    pub fn forward_train(&mut self, s_tilde: &Array4<T>, rng: &mut Rng) -> (Array4<T>, Rate) {
        let z = self.g_a.forward(s_tilde);
        let v = self.h_a.forward(&z);
        let z_noisy = quantize(&z, QuantMode::Noise, rng);
        let v_noisy = quantize(&v, QuantMode::Noise, rng);
        let hs_out = self.h_s.forward(&v_noisy);
        let (mu, sigma) = split_params(&hs_out, self.cfg.c_z);
        let p_z = gaussian_uniform_likelihood(slice(&z_noisy), slice(&mu), slice(&sigma));
        let p_v = self.prior.forward(&v_noisy);
        let n = s_tilde.dim().0;
        let mut rate = rate_bpp(&p_z, &p_v, self.cfg.height, self.cfg.width).expect("clamped likelihoods");
        rate.bpp /= n as f64;
        rate.bpp_z /= n as f64;
        rate.bpp_v /= n as f64;
        let s_hat = self.g_s.forward(&z_noisy);
        self.cache = Some(TrainCache {
            z_noisy,
            hs_out,
            batch: n,
        });
        (s_hat, rate)
    }

    /// Backward pass of `distortion(S_hat) + rate` given `dLoss/dS_hat`;
    /// the rate enters with weight one. Returns `dLoss/dS~`.
    pub fn backward_train(&mut self, grad_s_hat: &Array4<T>) -> Array4<T> {
        let cache = self.cache.take().expect("forward_train before backward_train");
        let rate_scale = 1.0 / (cache.batch * self.cfg.height * self.cfg.width) as f64;

        let mut dz = self.g_s.backward(grad_s_hat);
        let cz = self.cfg.c_z;
        let mut d_hs = Array4::<T>::zeros(cache.hs_out.raw_dim());
        {
            let mu = cache.hs_out.slice(s![.., ..cz, .., ..]);
            let raw = cache.hs_out.slice(s![.., cz.., .., ..]);
            let (mut d_mu, mut d_raw) = d_hs.view_mut().split_at(Axis(1), cz);
            ndarray::Zip::from(&mut dz)
                .and(&mut d_mu)
                .and(&mut d_raw)
                .and(&cache.z_noisy)
                .and(&mu)
                .and(&raw)
                .for_each(|dz, dm, dr, &z, &m, &r| {
                    let r = r.as_f64();
                    let sigma = scale_from_raw(r);
                    let (z, m) = (z.as_f64(), m.as_f64());
                    let p = gaussian_bin(z, m, sigma);
                    let g = rate_scale * neg_log2_grad(p);
                    let (dp_dz, dp_ds) = gaussian_bin_grad(z, m, sigma);
                    *dz += T::of(g * dp_dz);
                    *dm = T::of(-g * dp_dz);
                    *dr = T::of(scale_from_raw_grad(r, g * dp_ds));
                });
        }
        let mut dv = self.h_s.backward(&d_hs);
        dv += &self.prior.backward_rate(rate_scale);
        dz += &self.h_a.backward(&dv);
        self.g_a.backward(&dz)
    }

    fn gaussian_tables(&self, mu: &Array4<T>, sigma: &Array4<T>) -> Result<Vec<CdfTable>> {
        mu.iter()
            .zip(sigma.iter())
            .map(|(&m, &s)| {
                let (m, s) = (m.as_f64(), s.as_f64().max(SIGMA_MIN));
                build_cdf_gaussian(m, s, SymbolRange::around_gaussian(m, s))
            })
            .collect()
    }

    /// `g_c`: analysis, hyper-analysis, rounding and entropy coding.
    pub fn compress(&self, s_tilde: &ImageTensor<T>) -> Result<Bitstream> {
        let x = s_tilde.clone().into_batch();
        let z = self.analysis(&x)?;
        let v = self.h_a.infer(&z);
        let mut unused = rng::stream(0, StreamId::aux(0));
        let z_hat = quantize(&z, QuantMode::Round, &mut unused);
        let v_hat = quantize(&v, QuantMode::Round, &mut unused);

        let v_tables = self.prior.cdf_tables()?;
        let (_, vh, vw) = self.cfg.v_dims();
        let v_syms = to_symbols(&v_hat)?;
        let v_refs: Vec<&CdfTable> = (0..v_syms.len()).map(|i| &v_tables[i / (vh * vw)]).collect();
        let b_v = range_encode(&v_syms, &v_refs)?;

        let (mu, sigma) = self.hyper_synthesis(&v_hat);
        let z_tables = self.gaussian_tables(&mu, &sigma)?;
        let z_refs: Vec<&CdfTable> = z_tables.iter().collect();
        let b_z = range_encode(&to_symbols(&z_hat)?, &z_refs)?;
        Ok(Bitstream::pack(b_v, b_z, self.cfg.latent_dims()))
    }

    /// Entropy-decode `(v^, z^)` from a bitstream.
    pub fn decode_latents(&self, b: &Bitstream) -> Result<(Array4<T>, Array4<T>)> {
        if b.dims != self.cfg.latent_dims() {
            return Err(Error::Bitstream(format!(
                "stream dims {:?} do not match the model {:?}",
                b.dims,
                self.cfg.latent_dims()
            )));
        }
        let (cv, vh, vw) = self.cfg.v_dims();
        let v_tables = self.prior.cdf_tables()?;
        let v_refs: Vec<&CdfTable> = (0..cv * vh * vw).map(|i| &v_tables[i / (vh * vw)]).collect();
        let v_syms = range_decode(&b.b_v, &v_refs, v_refs.len())?;
        let v_hat = from_symbols(&v_syms, (1, cv, vh, vw));

        let (mu, sigma) = self.hyper_synthesis(&v_hat);
        let z_tables = self.gaussian_tables(&mu, &sigma)?;
        let z_refs: Vec<&CdfTable> = z_tables.iter().collect();
        let z_syms = range_decode(&b.b_z, &z_refs, z_refs.len())?;
        let (cz, zh, zw) = self.cfg.z_dims();
        Ok((v_hat, from_symbols(&z_syms, (1, cz, zh, zw))))
    }

    /// Entropy decoding, `h_s`, then synthesis `g_s`.
    pub fn decompress(&self, b: &Bitstream) -> Result<ImageTensor<T>> {
        let (_, z_hat) = self.decode_latents(b)?;
        let out = self.synthesis(&z_hat);
        Ok(ImageTensor::clamped(out.index_axis(Axis(0), 0).to_owned()))
    }

    pub fn infer_latents(&self, s_tilde: &ImageTensor<T>) -> Result<(Array4<T>, Array4<T>)> {
        let z = self.analysis(&s_tilde.clone().into_batch())?;
        let v = self.h_a.infer(&z);
        let mut unused = rng::stream(0, StreamId::aux(0));
        Ok((
            quantize(&v, QuantMode::Round, &mut unused),
            quantize(&z, QuantMode::Round, &mut unused),
        ))
    }

    /// Model code length in bits of one image's rounded latents.
    pub fn model_bits(&self, s_tilde: &ImageTensor<T>) -> Result<f64> {
        let (_, rate) = self.estimate(&s_tilde.clone().into_batch())?;
        Ok(rate.bpp * (self.cfg.height * self.cfg.width) as f64)
    }
}

fn split_params<T: Scalar>(out: &Array4<T>, c_z: usize) -> (Array4<T>, Array4<T>) {
    let mu = out.slice(s![.., ..c_z, .., ..]).to_owned();
    let sigma = out.slice(s![.., c_z.., .., ..]).mapv(|r| T::of(scale_from_raw(r.as_f64())));
    (mu, sigma)
}

fn slice<T>(a: &Array4<T>) -> &[T] {
    a.as_slice().expect("standard layout")
}

fn to_symbols<T: Scalar>(a: &Array4<T>) -> Result<Vec<i32>> {
    a.iter()
        .map(|v| {
            let x = v.as_f64();
            if x.is_finite() && x.abs() < i32::MAX as f64 {
                Ok(x as i32)
            } else {
                Err(Error::Coder(format!("latent value {x} is not codable")))
            }
        })
        .collect()
}

fn from_symbols<T: Scalar>(syms: &[i32], shape: (usize, usize, usize, usize)) -> Array4<T> {
    Array4::from_shape_vec(shape, syms.iter().map(|&s| T::of(s as f64)).collect()).expect("symbol count matches")
}

impl<T: Scalar> HasParams<T> for HyperpriorCompressor<T> {
    fn collect_params<'a>(&'a self, out: &mut ParamRefs<'a, T>) {
        self.g_a.params("g_a", out);
        self.h_a.params("h_a", out);
        self.h_s.params("h_s", out);
        self.g_s.params("g_s", out);
        let mut ps = Vec::new();
        self.prior.collect_params(&mut ps);
        out.extend(ps.into_iter().map(|(n, p)| (crate::nn::join("prior", &n), p)));
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut ParamMuts<'a, T>) {
        self.g_a.params_mut("g_a", out);
        self.h_a.params_mut("h_a", out);
        self.h_s.params_mut("h_s", out);
        self.g_s.params_mut("g_s", out);
        let mut ps = Vec::new();
        self.prior.collect_params_mut(&mut ps);
        out.extend(ps.into_iter().map(|(n, p)| (crate::nn::join("prior", &n), p)));
    }
}

/// A compressor trained on its own under `lambda * MSE + I`, as used by the
/// fully digital baseline (clean images in, no channel in the loop).
pub struct RdModel<T> {
    pub codec: HyperpriorCompressor<T>,
    pub lambda: f64,
}

impl<T: Scalar> HasParams<T> for RdModel<T> {
    fn collect_params<'a>(&'a self, out: &mut ParamRefs<'a, T>) {
        self.codec.collect_params(out);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut ParamMuts<'a, T>) {
        self.codec.collect_params_mut(out);
    }
}

impl<T: Scalar> Trainable<T> for RdModel<T> {
    fn train_batch(&mut self, batch: &Array4<T>, rng: &mut Rng) -> LossTerms {
        let (s_hat, rate) = self.codec.forward_train(batch, rng);
        let mse = crate::deepjscc::loss_af(batch, &s_hat).expect("shapes match");
        self.codec.backward_train(&mse_grad(batch, &s_hat, self.lambda));
        LossTerms {
            loss: self.lambda * mse + rate.bpp,
            mse,
            bpp: rate.bpp,
        }
    }

    fn eval_batch(&self, batch: &Array4<T>, _rng: &mut Rng) -> LossTerms {
        let (s_hat, rate) = self.codec.estimate(batch).expect("validated batch");
        let mse = crate::deepjscc::loss_af(batch, &s_hat.mapv(|v| v.clamp(T::zero(), T::one()))).expect("shapes match");
        LossTerms {
            loss: self.lambda * mse + rate.bpp,
            mse,
            bpp: rate.bpp,
        }
    }
}

#[cfg(test)]
mod tests;
