//! The learned analog codec (encoder `f_s`, decoder `f_d`), analog relays
//! and fully analog multi-hop chains (amplify-and-forward and
//! process-and-forward).

use ndarray::{Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::channel::{add_awgn_real, pack_complex, unpack_complex, SymbolVector};
use crate::error::{Error, Result};
use crate::hops::HopChain;
use crate::image::ImageTensor;
use crate::nn::{
    join, Conv2d, HasParams, LeakyRelu, LossTerms, Module, ParamMuts, ParamRefs, PixelShuffle,
    PowerNorm, ResBlock, Sequential, Sigmoid, Trainable,
};
use crate::rng::{self, Rng, StreamId};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JsccConfig {
    /// Image channels `C`.
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Hidden width `C_feat`.
    pub c_feat: usize,
    /// Encoder output channels `C_out`.
    pub c_out: usize,
    /// Residual blocks per resolution stage.
    pub res_blocks: usize,
}

impl JsccConfig {
    /// 32x32 RGB, `C_feat = 256`, `C_out = 24` (k = 768).
    pub fn cifar() -> Self {
        JsccConfig {
            channels: 3,
            height: 32,
            width: 32,
            c_feat: 256,
            c_out: 24,
            res_blocks: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.height.is_multiple_of(4) || !self.width.is_multiple_of(4) || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image size {}x{} must be a positive multiple of 4",
                self.height, self.width
            )));
        }
        if !(self.c_out * self.grid_len()).is_multiple_of(2) {
            return Err(Error::InvalidArgument(
                "C_out * H/4 * W/4 must be even to form complex symbols".into(),
            ));
        }
        if self.channels == 0 || self.c_feat == 0 || self.c_out == 0 {
            return Err(Error::InvalidArgument("channel counts must be positive".into()));
        }
        Ok(())
    }

    /// `(H/4, W/4)`.
    pub fn grid(&self) -> (usize, usize) {
        (self.height / 4, self.width / 4)
    }

    fn grid_len(&self) -> usize {
        (self.height / 4) * (self.width / 4)
    }

    /// Complex channel uses produced by `channels` feature maps on the grid.
    pub fn channel_uses(&self, channels: usize) -> usize {
        channels * self.grid_len() / 2
    }

    /// First-hop channel uses `k`.
    pub fn k(&self) -> usize {
        self.channel_uses(self.c_out)
    }

    /// Feature maps needed for `k` channel uses on the grid.
    pub fn channels_for(&self, k: usize) -> Result<usize> {
        let g = self.grid_len();
        if !(2 * k).is_multiple_of(g) {
            return Err(Error::InvalidArgument(format!(
                "k = {k} is not realizable on a {}x{} grid",
                self.height / 4,
                self.width / 4
            )));
        }
        Ok(2 * k / g)
    }
}

/// Two stride-2 stages with residual blocks: `(N, c_in, H, W) -> (N, c_out, H/4, W/4)`.
pub fn downsampling_backbone<T: Scalar>(
    c_in: usize,
    c_feat: usize,
    c_out: usize,
    blocks: usize,
    rng: &mut Rng,
) -> Sequential<T> {
    let mut net = Sequential::new()
        .push(Conv2d::new(c_in, c_feat, 3, 2, rng))
        .push(LeakyRelu::default());
    for _ in 0..blocks {
        net = net.push(ResBlock::new(c_feat, rng));
    }
    net = net
        .push(Conv2d::new(c_feat, c_feat, 3, 2, rng))
        .push(LeakyRelu::default());
    for _ in 0..blocks {
        net = net.push(ResBlock::new(c_feat, rng));
    }
    net.push(Conv2d::new(c_feat, c_out, 3, 1, rng))
}

/// Two pixel-shuffle stages back to full resolution, sigmoid head:
/// `(N, c_in, H/4, W/4) -> (N, c_img, H, W)` with values in `(0, 1)`.
pub fn upsampling_backbone<T: Scalar>(
    c_in: usize,
    c_feat: usize,
    c_img: usize,
    blocks: usize,
    rng: &mut Rng,
) -> Sequential<T> {
    let mut net = Sequential::new()
        .push(Conv2d::new(c_in, c_feat, 3, 1, rng))
        .push(LeakyRelu::default());
    for _ in 0..blocks {
        net = net.push(ResBlock::new(c_feat, rng));
    }
    net = net
        .push(Conv2d::new(c_feat, 4 * c_feat, 3, 1, rng))
        .push(PixelShuffle::new(2))
        .push(LeakyRelu::default());
    for _ in 0..blocks {
        net = net.push(ResBlock::new(c_feat, rng));
    }
    net.push(Conv2d::new(c_feat, 4 * c_feat, 3, 1, rng))
        .push(PixelShuffle::new(2))
        .push(LeakyRelu::default())
        .push(Conv2d::new(c_feat, c_img, 3, 1, rng))
        .push(Sigmoid::new())
}

fn check_batch<T: Scalar>(x: &Array4<T>, c: usize, h: usize, w: usize) -> Result<()> {
    let (_, xc, xh, xw) = x.dim();
    if (xc, xh, xw) != (c, h, w) {
        return Err(Error::shape(format!(
            "expected {c}x{h}x{w} per sample, got {xc}x{xh}x{xw}"
        )));
    }
    Ok(())
}

/// Encoder `f_s`: image to power-normalized channel input.
pub struct JsccEncoder<T> {
    cfg: JsccConfig,
    net: Sequential<T>,
    norm: PowerNorm<T>,
}

impl<T: Scalar> JsccEncoder<T> {
    pub fn new(cfg: JsccConfig, rng: &mut Rng) -> Self {
        JsccEncoder {
            cfg,
            net: downsampling_backbone(cfg.channels, cfg.c_feat, cfg.c_out, cfg.res_blocks, rng),
            norm: PowerNorm::new(),
        }
    }

    pub fn config(&self) -> &JsccConfig {
        &self.cfg
    }

    pub fn encode(&self, image: &ImageTensor<T>) -> Result<SymbolVector<T>> {
        let c = &self.cfg;
        let batch = image.clone().into_batch();
        check_batch(&batch, c.channels, c.height, c.width)?;
        let x = self.infer(&batch);
        pack_complex(x.as_slice().expect("standard layout"))
    }
}

impl<T: Scalar> Module<T> for JsccEncoder<T> {
    fn forward(&mut self, x: &Array4<T>) -> Array4<T> {
        let h = self.net.forward(x);
        self.norm.forward(&h)
    }

    fn backward(&mut self, grad: &Array4<T>) -> Array4<T> {
        let g = self.norm.backward(grad);
        self.net.backward(&g)
    }

    fn infer(&self, x: &Array4<T>) -> Array4<T> {
        self.norm.infer(&self.net.infer(x))
    }

    fn params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a, T>) {
        self.net.params(prefix, out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a, T>) {
        self.net.params_mut(prefix, out);
    }
}

/// Decoder `f_d`: received symbols (as `c_in` maps on the `H/4 x W/4` grid)
/// to an image in `[0, 1]`.
pub struct JsccDecoder<T> {
    cfg: JsccConfig,
    c_in: usize,
    net: Sequential<T>,
}

impl<T: Scalar> JsccDecoder<T> {
    pub fn new(cfg: JsccConfig, c_in: usize, rng: &mut Rng) -> Self {
        JsccDecoder {
            cfg,
            c_in,
            net: upsampling_backbone(c_in, cfg.c_feat, cfg.channels, cfg.res_blocks, rng),
        }
    }

    pub fn input_channels(&self) -> usize {
        self.c_in
    }

    /// Channel uses this decoder expects.
    pub fn k(&self) -> usize {
        self.cfg.channel_uses(self.c_in)
    }

    pub fn decode(&self, y: &SymbolVector<T>) -> Result<ImageTensor<T>> {
        if y.k() != self.k() {
            return Err(Error::shape(format!(
                "decoder expects k = {}, got {}",
                self.k(),
                y.k()
            )));
        }
        let (h, w) = self.cfg.grid();
        let raw = Array4::from_shape_vec((1, self.c_in, h, w), unpack_complex(y))
            .map_err(|e| Error::shape(e.to_string()))?;
        let out = self.infer(&raw);
        Ok(ImageTensor::from_batch(&out, 0))
    }
}

impl<T: Scalar> Module<T> for JsccDecoder<T> {
    fn forward(&mut self, x: &Array4<T>) -> Array4<T> {
        self.net.forward(x)
    }

    fn backward(&mut self, grad: &Array4<T>) -> Array4<T> {
        self.net.backward(grad)
    }

    fn infer(&self, x: &Array4<T>) -> Array4<T> {
        self.net.infer(x)
    }

    fn params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a, T>) {
        self.net.params(prefix, out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a, T>) {
        self.net.params_mut(prefix, out);
    }
}

/// Amplify-and-forward gain for an incoming link of noise variance `sigma2`.
pub fn af_gain(sigma2: f64) -> f64 {
    (1.0 / (1.0 + sigma2)).sqrt()
}

/// `x = alpha * y` with `alpha = sqrt(1 / (1 + sigma2))`.
pub fn af_scale<T: Scalar>(y: &SymbolVector<T>, sigma2: f64) -> SymbolVector<T> {
    y.scale(T::of(af_gain(sigma2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnalogScheme {
    #[serde(rename = "af")]
    AmplifyForward,
    #[serde(rename = "pf")]
    ProcessForward,
}

/// A neural relay: `c_in -> c_out` maps on the fixed grid, power-normalized.
/// With `blocks = None` it is the 1x1 channel-count change used to move
/// between `k` and `k'`.
pub struct NeuralRelay<T> {
    c_in: usize,
    c_out: usize,
    grid: (usize, usize),
    net: Sequential<T>,
    norm: PowerNorm<T>,
}

impl<T: Scalar> NeuralRelay<T> {
    /// Process-and-forward relay: residual backbone at constant resolution.
    pub fn process(cfg: &JsccConfig, c_in: usize, c_out: usize, rng: &mut Rng) -> Self {
        let mut net = Sequential::new()
            .push(Conv2d::new(c_in, cfg.c_feat, 3, 1, rng))
            .push(LeakyRelu::default());
        for _ in 0..cfg.res_blocks {
            net = net.push(ResBlock::new(cfg.c_feat, rng));
        }
        net = net.push(Conv2d::new(cfg.c_feat, c_out, 3, 1, rng));
        NeuralRelay {
            c_in,
            c_out,
            grid: cfg.grid(),
            net,
            norm: PowerNorm::new(),
        }
    }

    /// 1x1 convolution changing the number of channel uses.
    pub fn redimension(cfg: &JsccConfig, c_in: usize, c_out: usize, rng: &mut Rng) -> Self {
        NeuralRelay {
            c_in,
            c_out,
            grid: cfg.grid(),
            net: Sequential::new().push(Conv2d::new(c_in, c_out, 1, 1, rng)),
            norm: PowerNorm::new(),
        }
    }

    pub fn k_in(&self) -> usize {
        self.c_in * self.grid.0 * self.grid.1 / 2
    }

    pub fn k_out(&self) -> usize {
        self.c_out * self.grid.0 * self.grid.1 / 2
    }
}

impl<T: Scalar> Module<T> for NeuralRelay<T> {
    fn forward(&mut self, x: &Array4<T>) -> Array4<T> {
        let h = self.net.forward(x);
        self.norm.forward(&h)
    }

    fn backward(&mut self, grad: &Array4<T>) -> Array4<T> {
        let g = self.norm.backward(grad);
        self.net.backward(&g)
    }

    fn infer(&self, x: &Array4<T>) -> Array4<T> {
        self.norm.infer(&self.net.infer(x))
    }

    fn params<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a, T>) {
        self.net.params(prefix, out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a, T>) {
        self.net.params_mut(prefix, out);
    }
}

/// Processing at one analog relay.
pub enum AnalogRelay<T> {
    /// Scale by `af_gain` of the incoming link.
    Amplify,
    Neural(NeuralRelay<T>),
}

impl<T: Scalar> AnalogRelay<T> {
    pub fn is_amplify(&self) -> bool {
        matches!(self, AnalogRelay::Amplify)
    }
}

/// Apply a neural relay to a received vector.
pub fn pf_relay_apply<T: Scalar>(y: &SymbolVector<T>, relay: &AnalogRelay<T>) -> Result<SymbolVector<T>> {
    let AnalogRelay::Neural(net) = relay else {
        return Err(Error::InvalidArgument(
            "process-and-forward applied to an amplify relay".into(),
        ));
    };
    if y.k() != net.k_in() {
        return Err(Error::shape(format!(
            "relay expects k = {}, got {}",
            net.k_in(),
            y.k()
        )));
    }
    let (h, w) = net.grid;
    let raw = Array4::from_shape_vec((1, net.c_in, h, w), unpack_complex(y))
        .map_err(|e| Error::shape(e.to_string()))?;
    let out = net.infer(&raw);
    pack_complex(out.as_slice().expect("standard layout"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalogChainConfig {
    pub jscc: JsccConfig,
    pub scheme: AnalogScheme,
    /// Hops the relays are built (and trained) for.
    pub n_hops: usize,
    /// Feature maps carried over the core network; `k' = jscc.channel_uses(c_core)`.
    pub c_core: usize,
}

impl AnalogChainConfig {
    pub fn k_prime(&self) -> usize {
        self.jscc.channel_uses(self.c_core)
    }
}

/// Fully analog route: encoder, `n - 1` relays, decoder at `D`.
///
/// Amplify relays are followed by gain equalization at the destination:
/// `D` divides the received vector by the product of the AF gains applied
/// since the last neural relay, so the decoder always sees
/// `x + effective noise` at unit signal scale.
pub struct AnalogChainModel<T> {
    cfg: AnalogChainConfig,
    pub encoder: JsccEncoder<T>,
    pub decoder: JsccDecoder<T>,
    pub relays: Vec<AnalogRelay<T>>,
    train_sigma2: Vec<f64>,
    cache_gains: Vec<f64>,
    cache_eq: f64,
}

impl<T: Scalar> AnalogChainModel<T> {
    pub fn new(cfg: AnalogChainConfig, seed: u64) -> Result<Self> {
        cfg.jscc.validate()?;
        if cfg.n_hops == 0 {
            return Err(Error::InvalidArgument("a route needs at least one hop".into()));
        }
        let mut rng = rng::stream(seed, StreamId::init(0));
        let encoder = JsccEncoder::new(cfg.jscc, &mut rng);
        let c_dec = if cfg.n_hops == 1 { cfg.jscc.c_out } else { cfg.c_core };
        let decoder = JsccDecoder::new(cfg.jscc, c_dec, &mut rng);
        let mut relays = Vec::with_capacity(cfg.n_hops - 1);
        for i in 0..cfg.n_hops.saturating_sub(1) {
            let c_in = if i == 0 { cfg.jscc.c_out } else { cfg.c_core };
            let relay = match cfg.scheme {
                AnalogScheme::AmplifyForward if c_in == cfg.c_core => AnalogRelay::Amplify,
                AnalogScheme::AmplifyForward => AnalogRelay::Neural(NeuralRelay::redimension(
                    &cfg.jscc, c_in, cfg.c_core, &mut rng,
                )),
                AnalogScheme::ProcessForward => {
                    AnalogRelay::Neural(NeuralRelay::process(&cfg.jscc, c_in, cfg.c_core, &mut rng))
                }
            };
            relays.push(relay);
        }
        Ok(AnalogChainModel {
            cfg,
            encoder,
            decoder,
            relays,
            train_sigma2: Vec::new(),
            cache_gains: Vec::new(),
            cache_eq: 1.0,
        })
    }

    pub fn config(&self) -> &AnalogChainConfig {
        &self.cfg
    }

    /// Per-hop noise variances used by [`Trainable::train_batch`].
    pub fn set_training_chain(&mut self, sigma2: Vec<f64>) {
        self.train_sigma2 = sigma2;
    }

    fn check_chain(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidArgument("empty hop chain".into()));
        }
        if n - 1 > self.relays.len() && !self.can_extend() {
            return Err(Error::InvalidArgument(format!(
                "model has {} relays, route needs {}",
                self.relays.len(),
                n - 1
            )));
        }
        // decoder width must match what reaches D
        let c_at_d = if n == 1 { self.cfg.jscc.c_out } else { self.cfg.c_core };
        if c_at_d != self.decoder.input_channels() {
            return Err(Error::InvalidArgument(format!(
                "decoder takes {} maps but {} arrive over {n} hops",
                self.decoder.input_channels(),
                c_at_d
            )));
        }
        Ok(())
    }

    /// AF routes with `k = k'` extend to any length with extra amplify relays.
    fn can_extend(&self) -> bool {
        self.cfg.scheme == AnalogScheme::AmplifyForward
            && self.relays.iter().skip(1).all(AnalogRelay::is_amplify)
    }

    fn relay_at(&self, i: usize) -> &AnalogRelay<T> {
        self.relays.get(i).unwrap_or(&AnalogRelay::Amplify)
    }

    /// Inference over a route. Noise for sample `b` on hop `h` comes from
    /// `stream(seed, StreamId::hop(first_index + b, h))`.
    pub fn run_batch(&self, batch: &Array4<T>, sigma2: &[f64], seed: u64, first_index: u64) -> Result<Array4<T>> {
        let c = &self.cfg.jscc;
        check_batch(batch, c.channels, c.height, c.width)?;
        self.check_chain(sigma2.len())?;
        let mut x = self.encoder.infer(batch);
        let mut eq = 1.0;
        for (hop, &s2) in sigma2.iter().enumerate() {
            add_noise_per_sample(&mut x, s2, seed, first_index, hop);
            if hop + 1 < sigma2.len() {
                match self.relay_at(hop) {
                    AnalogRelay::Amplify => {
                        let g = af_gain(s2);
                        x.mapv_inplace(|v| v * T::of(g));
                        eq *= g;
                    }
                    AnalogRelay::Neural(net) => {
                        x = net.infer(&x);
                        eq = 1.0;
                    }
                }
            }
        }
        x.mapv_inplace(|v| v / T::of(eq));
        Ok(self.decoder.infer(&x))
    }
}

fn add_noise_per_sample<T: Scalar>(x: &mut Array4<T>, sigma2: f64, seed: u64, first: u64, hop: usize) {
    for (b, mut s) in x.axis_iter_mut(Axis(0)).enumerate() {
        let mut r = rng::stream(seed, StreamId::hop(first + b as u64, hop as u16));
        let slice = s.as_slice_mut().expect("standard layout");
        add_awgn_real(slice, sigma2, &mut r);
    }
}

/// Encode, cross every hop of an all-analog route, decode at `D`.
pub fn analog_multihop_run<T: Scalar>(
    image: &ImageTensor<T>,
    hops: &HopChain,
    model: &AnalogChainModel<T>,
    seed: u64,
) -> Result<ImageTensor<T>> {
    if !hops.all_analog() {
        return Err(Error::InvalidArgument(
            "fully analog schemes need every hop to be analog".into(),
        ));
    }
    let out = model.run_batch(&image.clone().into_batch(), &hops.sigma2s(), seed, 0)?;
    Ok(ImageTensor::from_batch(&out, 0))
}

/// Mean squared error over every element of the batch.
pub fn loss_af<T: Scalar>(s: &Array4<T>, s_hat: &Array4<T>) -> Result<f64> {
    if s.dim() != s_hat.dim() {
        return Err(Error::shape(format!("{:?} vs {:?}", s.dim(), s_hat.dim())));
    }
    Ok(s.iter()
        .zip(s_hat.iter())
        .map(|(&a, &b)| (a.as_f64() - b.as_f64()).powi(2))
        .sum::<f64>()
        / s.len() as f64)
}

/// Gradient of [`loss_af`] with respect to `s_hat`.
pub(crate) fn mse_grad<T: Scalar>(s: &Array4<T>, s_hat: &Array4<T>, scale: f64) -> Array4<T> {
    let k = T::of(2.0 * scale / s.len() as f64);
    let mut g = s_hat - s;
    g.mapv_inplace(|v| v * k);
    g
}

impl<T: Scalar> HasParams<T> for AnalogChainModel<T> {
    fn collect_params<'a>(&'a self, out: &mut ParamRefs<'a, T>) {
        self.encoder.params("encoder", out);
        for (i, r) in self.relays.iter().enumerate() {
            if let AnalogRelay::Neural(n) = r {
                n.params(&join("relay", &i.to_string()), out);
            }
        }
        self.decoder.params("decoder", out);
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut ParamMuts<'a, T>) {
        self.encoder.params_mut("encoder", out);
        for (i, r) in self.relays.iter_mut().enumerate() {
            if let AnalogRelay::Neural(n) = r {
                n.params_mut(&join("relay", &i.to_string()), out);
            }
        }
        self.decoder.params_mut("decoder", out);
    }
}

impl<T: Scalar> AnalogChainModel<T> {
    fn forward_train(&mut self, batch: &Array4<T>, rng: &mut Rng) -> Array4<T> {
        let sigma2 = if self.train_sigma2.is_empty() {
            vec![0.0; self.cfg.n_hops]
        } else {
            self.train_sigma2.clone()
        };
        let mut x = self.encoder.forward(batch);
        let mut gains = Vec::with_capacity(sigma2.len());
        let mut eq = 1.0;
        for (hop, &s2) in sigma2.iter().enumerate() {
            add_awgn_real(x.as_slice_mut().expect("standard layout"), s2, rng);
            if hop + 1 < sigma2.len() {
                if hop >= self.relays.len() {
                    self.relays.push(AnalogRelay::Amplify);
                }
                match &mut self.relays[hop] {
                    AnalogRelay::Amplify => {
                        let g = af_gain(s2);
                        x.mapv_inplace(|v| v * T::of(g));
                        gains.push(g);
                        eq *= g;
                    }
                    AnalogRelay::Neural(net) => {
                        x = net.forward(&x);
                        gains.push(f64::NAN);
                        eq = 1.0;
                    }
                }
            }
        }
        x.mapv_inplace(|v| v / T::of(eq));
        self.cache_gains = gains;
        self.cache_eq = eq;
        self.decoder.forward(&x)
    }

    fn backward_train(&mut self, grad: &Array4<T>) {
        let mut g = self.decoder.backward(grad);
        let eq = T::of(self.cache_eq);
        g.mapv_inplace(|v| v / eq);
        let gains = std::mem::take(&mut self.cache_gains);
        for (hop, gain) in gains.iter().enumerate().rev() {
            match &mut self.relays[hop] {
                AnalogRelay::Amplify => g.mapv_inplace(|v| v * T::of(*gain)),
                AnalogRelay::Neural(net) => g = net.backward(&g),
            }
        }
        self.encoder.backward(&g);
    }
}

impl<T: Scalar> Trainable<T> for AnalogChainModel<T> {
    fn train_batch(&mut self, batch: &Array4<T>, rng: &mut Rng) -> LossTerms {
        let s_hat = self.forward_train(batch, rng);
        let mse = loss_af(batch, &s_hat).expect("shapes match");
        let g = mse_grad(batch, &s_hat, 1.0);
        self.backward_train(&g);
        LossTerms::distortion_only(mse)
    }

    fn eval_batch(&self, batch: &Array4<T>, rng: &mut Rng) -> LossTerms {
        let sigma2 = if self.train_sigma2.is_empty() {
            vec![0.0; self.cfg.n_hops]
        } else {
            self.train_sigma2.clone()
        };
        let seed = rand::Rng::gen::<u64>(rng);
        let s_hat = self.run_batch(batch, &sigma2, seed, 0).expect("validated route");
        LossTerms::distortion_only(loss_af(batch, &s_hat).expect("shapes match"))
    }
}

/// Per-sample unit-power check (`(1/k)||x||^2` for every sample).
pub fn sample_powers<T: Scalar>(x: &Array4<T>) -> Vec<f64> {
    x.axis_iter(Axis(0))
        .map(|s| {
            let e: f64 = s.iter().map(|v| v.as_f64().powi(2)).sum();
            e / (s.len() as f64 / 2.0)
        })
        .collect()
}
