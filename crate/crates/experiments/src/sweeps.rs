//! Evaluation of every scheme over a hop chain, and the experiment suites
//! built on it: hop sweep, rate-distortion sweep, SNR mismatch, PER sweep.

use std::collections::BTreeMap;
use std::time::Instant;

use jsc_core::baselines::{
    digital_baseline_run, lloyd_design, naive_quant_run, received_components, ImageCodec, NaiveQuantizer,
};
use jsc_core::channel::snr_db_to_sigma2;
use jsc_core::deepjscc::AnalogChainModel;
use jsc_core::digital::{measure_per, CodedModScheme, LinkMode};
use jsc_core::hops::HopChain;
use jsc_core::hybrid::JscModel;
use jsc_core::image::ImageTensor;
use jsc_core::rng::item_seed;
use jsc_core::{Error, Result};
use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::metrics::{evaluate_psnr, mean_std};

/// One evaluated (model, route) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub scheme: String,
    pub lambda: Option<f64>,
    pub snr_s_train_db: Option<f64>,
    pub snr_s_test_db: f64,
    /// Core-hop SNR; absent on single-hop routes.
    pub snr_n_db: Option<f64>,
    pub n_hops: usize,
    pub images: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    /// `I = I_z + I_v`, from the coded bit counts.
    pub bpp: f64,
    pub bpp_z: f64,
    pub bpp_v: f64,
    /// Mean `#b_1` in bits.
    pub b1_mean: f64,
    /// Mean core-network channel uses per image and hop.
    pub k_prime: f64,
    pub decode_failures: usize,
    pub wall_clock_s: f64,
    pub seed: u64,
    pub checkpoint: String,
}

impl ResultRecord {
    fn new(scheme: &str, hops: &HopChain, seed: u64) -> Self {
        ResultRecord {
            scheme: scheme.to_string(),
            lambda: None,
            snr_s_train_db: None,
            snr_s_test_db: hops.links[0].noise.snr_db,
            snr_n_db: hops.links.get(1).map(|l| l.noise.snr_db),
            n_hops: hops.n_hops(),
            images: 0,
            psnr_mean: f64::NAN,
            psnr_std: f64::NAN,
            bpp: 0.0,
            bpp_z: 0.0,
            bpp_v: 0.0,
            b1_mean: 0.0,
            k_prime: 0.0,
            decode_failures: 0,
            wall_clock_s: 0.0,
            seed,
            checkpoint: String::new(),
        }
    }

    fn finish(mut self, psnrs: &[f64], started: Instant) -> Self {
        let (m, s) = mean_std(psnrs);
        self.images = psnrs.len();
        self.psnr_mean = m;
        self.psnr_std = s;
        self.wall_clock_s = started.elapsed().as_secs_f64();
        self
    }

    pub fn with_checkpoint(mut self, id: impl Into<String>) -> Self {
        self.checkpoint = id.into();
        self
    }
}

fn hw(test: &Dataset) -> f64 {
    let (_, _, h, w) = test.images.dim();
    (h * w) as f64
}

fn image(test: &Dataset, i: usize) -> ImageTensor<f32> {
    ImageTensor::clamped(test.images.index_axis(Axis(0), i).to_owned())
}

/// Hybrid scheme; image `i` uses seed `item_seed(seed, i)`.
pub fn eval_jsc(model: &JscModel<f32>, test: &Dataset, hops: &HopChain, seed: u64) -> Result<ResultRecord> {
    let t0 = Instant::now();
    let mut rec = ResultRecord::new("jsc", hops, seed);
    rec.lambda = Some(model.config().lambda);
    rec.snr_s_train_db = Some(model.config().snr_s_db);
    let (mut psnrs, mut bits, mut bits_z, mut uses) = (Vec::new(), 0.0, 0.0, 0.0);
    for i in 0..test.len() {
        let s = image(test, i);
        let out = model.run(&s, hops, item_seed(seed, i as u64))?;
        psnrs.push(evaluate_psnr(s.view(), out.image.view()));
        bits += out.payload_bits as f64;
        bits_z += out.bits_z as f64;
        uses += out.links.first().map_or(0.0, |l| l.channel_uses);
        rec.decode_failures += out.decode_failed as usize;
    }
    let n = test.len().max(1) as f64;
    rec.b1_mean = bits / n;
    rec.bpp = bits / n / hw(test);
    rec.bpp_z = bits_z / n / hw(test);
    rec.bpp_v = rec.bpp - rec.bpp_z;
    rec.k_prime = uses / n;
    Ok(rec.finish(&psnrs, t0))
}

/// Fully analog route (AF, PF or one-hop DeepJSCC).
pub fn eval_analog(model: &AnalogChainModel<f32>, test: &Dataset, hops: &HopChain, seed: u64) -> Result<ResultRecord> {
    if !hops.all_analog() {
        return Err(Error::InvalidArgument("analog schemes need analog hops".into()));
    }
    let t0 = Instant::now();
    let cfg = model.config();
    let name = match (cfg.n_hops, cfg.scheme) {
        (1, _) => "deepjscc",
        (_, jsc_core::deepjscc::AnalogScheme::AmplifyForward) => "af",
        _ => "pf",
    };
    let mut rec = ResultRecord::new(name, hops, seed);
    rec.k_prime = if hops.n_hops() > 1 { cfg.k_prime() as f64 } else { 0.0 };
    let sigma2 = hops.sigma2s();
    let mut psnrs = Vec::with_capacity(test.len());
    // one call per image so every scheme sees the same first-hop noise
    for i in 0..test.len() {
        let s = image(test, i);
        let out = model.run_batch(&s.clone().into_batch(), &sigma2, item_seed(seed, i as u64), 0)?;
        psnrs.push(evaluate_psnr(s.view(), out.index_axis(Axis(0), 0)));
    }
    Ok(rec.finish(&psnrs, t0))
}

/// Naive quantization of `y_1` with a point-to-point model's codec.
pub fn eval_naive(
    p2p: &AnalogChainModel<f32>,
    quantizer: &NaiveQuantizer,
    test: &Dataset,
    hops: &HopChain,
    seed: u64,
) -> Result<ResultRecord> {
    let t0 = Instant::now();
    let m = quantizer.bits_per_real();
    let mut rec = ResultRecord::new(&format!("naive-{m}bit"), hops, seed);
    let (mut psnrs, mut bits, mut uses) = (Vec::new(), 0.0, 0.0);
    for i in 0..test.len() {
        let s = image(test, i);
        let out = naive_quant_run(&s, hops, quantizer, &p2p.encoder, &p2p.decoder, item_seed(seed, i as u64))?;
        psnrs.push(evaluate_psnr(s.view(), out.image.view()));
        bits += out.bits_used as f64;
        uses += out.links.first().map_or(0.0, |l| l.channel_uses);
    }
    let n = test.len().max(1) as f64;
    rec.b1_mean = bits / n;
    rec.bpp = bits / n / hw(test);
    rec.k_prime = uses / n;
    Ok(rec.finish(&psnrs, t0))
}

/// Fully digital pipeline with a pluggable image codec.
pub fn eval_digital(codec: &dyn ImageCodec<f32>, test: &Dataset, hops: &HopChain, seed: u64) -> Result<ResultRecord> {
    let t0 = Instant::now();
    let mut rec = ResultRecord::new(&format!("digital-{}", codec.name()), hops, seed);
    let (mut psnrs, mut bits, mut uses) = (Vec::new(), 0.0, 0.0);
    for i in 0..test.len() {
        let s = image(test, i);
        let out = digital_baseline_run(&s, hops, codec, item_seed(seed, i as u64))?;
        psnrs.push(evaluate_psnr(s.view(), out.image.view()));
        bits += out.bits as f64;
        uses += out.links.get(1).map_or(0.0, |l| l.channel_uses);
        rec.decode_failures += out.decode_failed as usize;
    }
    let n = test.len().max(1) as f64;
    rec.b1_mean = bits / n;
    rec.bpp = bits / n / hw(test);
    rec.k_prime = uses / n;
    Ok(rec.finish(&psnrs, t0))
}

/// Lloyd quantizer for the received first-hop signal of `p2p` at
/// `snr_s_db`, designed on `n_samples` pooled real components of `images`.
pub fn design_quantizer(
    p2p: &AnalogChainModel<f32>,
    images: &Dataset,
    snr_s_db: f64,
    m: u32,
    n_samples: usize,
    seed: u64,
) -> Result<NaiveQuantizer> {
    let sigma2 = snr_db_to_sigma2(snr_s_db);
    let mut samples = Vec::with_capacity(n_samples);
    let mut i = 0usize;
    while samples.len() < n_samples && !images.is_empty() {
        let s = image(images, i % images.len());
        let y = received_components(&s, &p2p.encoder, sigma2, seed, i as u64);
        samples.extend(y.into_iter().map(|v| v as f64));
        i += 1;
    }
    samples.truncate(n_samples);
    Ok(NaiveQuantizer::Lloyd(lloyd_design(&samples, m, 1e-4, 500)?))
}

/// Relays that change the symbol count leave a decoder that only fits
/// multi-hop routes.
fn runs_single_hop(m: &AnalogChainModel<f32>) -> bool {
    m.decoder.input_channels() == m.config().jscc.c_out
}

/// Models entering a hop sweep. PF relays are trained per hop count.
#[derive(Default)]
pub struct HopSweepModels<'a> {
    pub jsc: Vec<&'a JscModel<f32>>,
    pub af: Option<&'a AnalogChainModel<f32>>,
    pub pf: BTreeMap<usize, &'a AnalogChainModel<f32>>,
    /// Point-to-point codec used by the naive quantization baselines.
    pub p2p: Option<&'a AnalogChainModel<f32>>,
    pub quantizers: Vec<NaiveQuantizer>,
    pub digital: Option<(&'a dyn ImageCodec<f32>, LinkMode)>,
}

/// PSNR against hop count `n = 1..=n_max` for every supplied scheme.
pub fn hop_sweep(
    models: &HopSweepModels<'_>,
    n_max: usize,
    core: &LinkMode,
    snr_s_db: f64,
    snr_n_db: f64,
    test: &Dataset,
    seed: u64,
) -> Result<Vec<ResultRecord>> {
    let mut out = Vec::new();
    for n in 1..=n_max {
        let hybrid = HopChain::hybrid(snr_s_db, snr_n_db, n, core.clone());
        let analog = HopChain::analog(snr_s_db, snr_n_db, n);
        for jsc in &models.jsc {
            out.push(eval_jsc(jsc, test, &hybrid, seed)?);
        }
        if let Some(af) = models.af.filter(|m| n > 1 || runs_single_hop(m)) {
            out.push(eval_analog(af, test, &analog, seed)?);
        }
        if let Some(pf) = models.pf.get(&n) {
            out.push(eval_analog(pf, test, &analog, seed)?);
        }
        if let Some(p2p) = models.p2p {
            if n == 1 {
                // every analog scheme reduces to the point-to-point codec
                out.push(eval_analog(p2p, test, &analog, seed)?);
            } else {
                for q in &models.quantizers {
                    out.push(eval_naive(p2p, q, test, &hybrid, seed)?);
                }
            }
        }
        if let Some((codec, first)) = &models.digital {
            let route = HopChain::digital(snr_s_db, snr_n_db, n, first.clone(), core.clone());
            out.push(eval_digital(*codec, test, &route, seed)?);
        }
    }
    Ok(out)
}

/// One (bpp, PSNR) point per trained JSC model, evaluated on its own
/// training SNR over a two-hop route (any longer route gives the same
/// result with lossless forwarding).
pub fn rd_sweep(
    models: &[&JscModel<f32>],
    snr_n_db: f64,
    core: &LinkMode,
    test: &Dataset,
    seed: u64,
) -> Result<Vec<ResultRecord>> {
    models
        .iter()
        .map(|m| {
            let hops = HopChain::hybrid(m.config().snr_s_db, snr_n_db, 2, core.clone());
            eval_jsc(m, test, &hops, seed)
        })
        .collect()
}

/// Evaluate one JSC model at first-hop SNRs other than its training SNR.
pub fn mismatch_eval(
    model: &JscModel<f32>,
    test_snrs_db: &[f64],
    snr_n_db: f64,
    core: &LinkMode,
    test: &Dataset,
    seed: u64,
) -> Result<Vec<ResultRecord>> {
    let mut snrs = vec![model.config().snr_s_db];
    snrs.extend(test_snrs_db.iter().copied().filter(|s| *s != model.config().snr_s_db));
    snrs.sort_by(f64::total_cmp);
    snrs.iter()
        .map(|&s| eval_jsc(model, test, &HopChain::hybrid(s, snr_n_db, 2, core.clone()), seed))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerRecord {
    pub qam_order: u32,
    pub code_rate: f64,
    pub block_length: usize,
    pub snr_db: f64,
    pub blocks: usize,
    pub per: f64,
}

/// Packet error rate of a coded scheme across `snrs_db`.
pub fn per_sweep(scheme: &CodedModScheme, snrs_db: &[f64], n_blocks: usize, seed: u64) -> Result<Vec<PerRecord>> {
    snrs_db
        .iter()
        .map(|&snr| {
            Ok(PerRecord {
                qam_order: 1 << scheme.order.bits_per_symbol(),
                code_rate: scheme.code.rate(),
                block_length: scheme.code.n(),
                snr_db: snr,
                blocks: n_blocks,
                per: measure_per(scheme, snr, n_blocks, seed)?,
            })
        })
        .collect()
}
