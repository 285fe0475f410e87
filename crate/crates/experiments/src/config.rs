//! Run configuration, loadable from TOML.

use std::path::{Path, PathBuf};

use jsc_core::compressor::CompressorConfig;
use jsc_core::deepjscc::{AnalogChainConfig, AnalogScheme, JsccConfig};
use jsc_core::digital::{CodedModConfig, LinkMode, QamOrder};
use jsc_core::hybrid::JscConfig;
use jsc_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetConfig;

/// What a training run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Hybrid: DeepJSCC first hop, learned compression at `R_1`.
    Jsc,
    /// Point-to-point DeepJSCC (one analog hop).
    Deepjscc,
    /// Fully analog, amplify-and-forward relays.
    Af,
    /// Fully analog, neural process-and-forward relays.
    Pf,
    /// Hyperprior image codec trained on clean images.
    DigitalCodec,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Jsc => "jsc",
            Scheme::Deepjscc => "deepjscc",
            Scheme::Af => "af",
            Scheme::Pf => "pf",
            Scheme::DigitalCodec => "digital-codec",
        }
    }
}

/// Network widths. Defaults follow the CIFAR-10 settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub c_feat: usize,
    pub c_out: usize,
    pub res_blocks: usize,
    pub c_z: usize,
    pub c_v: usize,
    /// Expected core-network channel uses of the analog baselines.
    pub k_prime: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            c_feat: 256,
            c_out: 24,
            res_blocks: 2,
            c_z: 256,
            c_v: 192,
            k_prime: 640,
        }
    }
}

/// Digital link models for the core network and the source hop of the
/// fully digital baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum TransportConfig {
    Ideal {
        /// `R_N` in bits per channel use.
        efficiency: f64,
    },
    Coded(CodedModConfig),
}

impl TransportConfig {
    pub fn ideal_core() -> Self {
        TransportConfig::Ideal { efficiency: 2.0 }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn build(&self) -> Result<LinkMode> {
        match self {
            TransportConfig::Ideal { efficiency } => {
                if !(*efficiency > 0.0) {
                    return Err(Error::InvalidArgument("link efficiency must be positive".into()));
                }
                Ok(LinkMode::Ideal { efficiency: *efficiency })
            }
            TransportConfig::Coded(c) => Ok(LinkMode::Coded(std::sync::Arc::new(c.build()?))),
        }
    }

    /// `(1/2, 4-QAM)` for the digital baseline's source hop.
    pub fn coded_source() -> Self {
        TransportConfig::Coded(CodedModConfig {
            order: QamOrder::Qam4,
            ..CodedModConfig::default()
        })
    }
}

/// Every field of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub scheme: Scheme,
    pub lambda: f64,
    pub snr_s_db: f64,
    pub snr_n_db: f64,
    /// Hops the analog relays are trained for (AF/PF).
    pub n_hops: usize,
    pub lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Keep a pre-trained DeepJSCC codec fixed while training the compressor.
    pub freeze_jscc: bool,
    /// Point-to-point checkpoint used to initialize `f_s`/`f_d` of a JSC model.
    pub init_from: Option<PathBuf>,
    pub arch: ArchConfig,
    pub data: DatasetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scheme: Scheme::Jsc,
            lambda: 3200.0,
            snr_s_db: 2.0,
            snr_n_db: 10.0,
            n_hops: 2,
            lr: 1e-4,
            plateau_factor: 0.8,
            plateau_patience: 10,
            batch_size: 128,
            epochs: 300,
            seed: 0,
            freeze_jscc: false,
            init_from: None,
            arch: ArchConfig::default(),
            data: DatasetConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Reduced schedule: 10k training images, 60 epochs.
    pub fn desk_scale() -> Self {
        TrainConfig {
            epochs: 60,
            data: DatasetConfig {
                max_train: Some(10_000),
                ..DatasetConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: TrainConfig = toml::from_str(&text).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is serializable")
    }

    // negated comparisons so that NaN fields are rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return Err(Error::InvalidArgument("lr must be positive and plateau factor in (0, 1]".into()));
        }
        if self.batch_size == 0 || self.n_hops == 0 {
            return Err(Error::InvalidArgument("batch size and hop count must be positive".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidArgument("lambda must be positive".into()));
        }
        match self.scheme {
            Scheme::Af | Scheme::Pf => {
                self.analog_config()?.jscc.validate()?;
            }
            Scheme::Deepjscc => self.jscc().validate()?,
            Scheme::Jsc => self.jsc_config().validate()?,
            Scheme::DigitalCodec => self.compressor().validate()?,
        }
        Ok(())
    }

    pub fn jscc(&self) -> JsccConfig {
        let (c, h, w) = self.data.image_dims();
        JsccConfig {
            channels: c,
            height: h,
            width: w,
            c_feat: self.arch.c_feat,
            c_out: self.arch.c_out,
            res_blocks: self.arch.res_blocks,
        }
    }

    pub fn compressor(&self) -> CompressorConfig {
        CompressorConfig::for_images(&self.jscc(), self.arch.c_z, self.arch.c_v)
    }

    pub fn jsc_config(&self) -> JscConfig {
        JscConfig {
            jscc: self.jscc(),
            compressor: self.compressor(),
            lambda: self.lambda,
            snr_s_db: self.snr_s_db,
            freeze_jscc: self.freeze_jscc,
        }
    }

    pub fn analog_config(&self) -> Result<AnalogChainConfig> {
        let jscc = self.jscc();
        let (scheme, n_hops) = match self.scheme {
            Scheme::Af => (AnalogScheme::AmplifyForward, self.n_hops),
            Scheme::Pf => (AnalogScheme::ProcessForward, self.n_hops),
            _ => (AnalogScheme::AmplifyForward, 1),
        };
        let c_core = if n_hops == 1 { jscc.c_out } else { jscc.channels_for(self.arch.k_prime)? };
        Ok(AnalogChainConfig {
            jscc,
            scheme,
            n_hops,
            c_core,
        })
    }

    /// Per-hop noise variances of the training route.
    pub fn training_chain(&self) -> Vec<f64> {
        let n = match self.scheme {
            Scheme::Af | Scheme::Pf => self.n_hops,
            _ => 1,
        };
        (0..n)
            .map(|i| jsc_core::channel::snr_db_to_sigma2(if i == 0 { self.snr_s_db } else { self.snr_n_db }))
            .collect()
    }

    /// Short identifier used for run-directory names.
    pub fn tag(&self) -> String {
        match self.scheme {
            Scheme::Jsc => format!("jsc_l{}_s{}", self.lambda, self.snr_s_db),
            Scheme::Deepjscc => format!("deepjscc_s{}", self.snr_s_db),
            Scheme::Af | Scheme::Pf => format!("{}_n{}_s{}", self.scheme.as_str(), self.n_hops, self.snr_s_db),
            Scheme::DigitalCodec => format!("codec_l{}", self.lambda),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_cifar_settings() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!(c.jscc().k(), 768);
        assert_eq!((c.lr, c.plateau_factor, c.plateau_patience), (1e-4, 0.8, 10));
        let af = TrainConfig { scheme: Scheme::Af, n_hops: 3, ..c.clone() };
        let a = af.analog_config().unwrap();
        assert_eq!(a.k_prime(), 640);
        assert_eq!(af.training_chain().len(), 3);
        let desk = TrainConfig::desk_scale();
        assert_eq!((desk.epochs, desk.data.max_train), (60, Some(10_000)));
    }

    #[test]
    fn toml_roundtrip_and_partial_files() {
        let c = TrainConfig {
            scheme: Scheme::Pf,
            init_from: Some("p2p.safetensors".into()),
            ..TrainConfig::default()
        };
        let back: TrainConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        let partial: TrainConfig = toml::from_str("scheme = \"af\"\nlambda = 800.0\n[arch]\nc_feat = 32\n").unwrap();
        assert_eq!(partial.scheme, Scheme::Af);
        assert_eq!(partial.arch.c_feat, 32);
        assert_eq!(partial.arch.c_out, 24);
        assert_eq!(partial.epochs, 300);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(TrainConfig { lr: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { lambda: -1.0, ..TrainConfig::default() }.validate().is_err());
        let t: TransportConfig = toml::from_str("mode = \"coded\"\norder = 4\n").unwrap();
        assert!(matches!(t.build().unwrap(), LinkMode::Coded(_)));
        assert!(TransportConfig::Ideal { efficiency: 0.0 }.build().is_err());
    }
}
