//! Trained-model container: construction from a [`TrainConfig`] and
//! checkpoint persistence.

use std::path::Path;

use jsc_core::checkpoint::{load_checkpoint, read_meta, save_checkpoint, CheckpointMeta};
use jsc_core::compressor::{CompressorConfig, HyperpriorCompressor, RdModel};
use jsc_core::deepjscc::{AnalogChainConfig, AnalogChainModel};
use jsc_core::hybrid::{JscConfig, JscModel};
use jsc_core::nn::{HasParams, Trainable};
use jsc_core::rng::{self, StreamId};
use jsc_core::{Error, Result};

use crate::config::{Scheme, TrainConfig};

#[allow(clippy::large_enum_variant)]
pub enum Model {
    Jsc(JscModel<f32>),
    /// Point-to-point DeepJSCC, AF or PF.
    Analog(AnalogChainModel<f32>),
    Codec(RdModel<f32>),
}

impl Model {
    /// Fresh model for `cfg`, optionally starting `f_s`/`f_d` of a JSC model
    /// from `cfg.init_from`.
    pub fn build(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.scheme {
            Scheme::Jsc => {
                let jc = cfg.jsc_config();
                match &cfg.init_from {
                    Some(path) => match Model::load(path)? {
                        (Model::Analog(p2p), _) => Model::Jsc(JscModel::from_point_to_point(jc, p2p, cfg.seed)?),
                        _ => {
                            return Err(Error::Checkpoint(format!(
                                "{} is not a point-to-point DeepJSCC checkpoint",
                                path.display()
                            )))
                        }
                    },
                    None => Model::Jsc(JscModel::new(jc, cfg.seed)?),
                }
            }
            Scheme::Deepjscc | Scheme::Af | Scheme::Pf => {
                let mut m = AnalogChainModel::new(cfg.analog_config()?, cfg.seed)?;
                m.set_training_chain(cfg.training_chain());
                Model::Analog(m)
            }
            Scheme::DigitalCodec => {
                let mut r = rng::stream(cfg.seed, StreamId::init(1));
                Model::Codec(RdModel {
                    codec: HyperpriorCompressor::new(cfg.compressor(), &mut r)?,
                    lambda: cfg.lambda,
                })
            }
        })
    }

    pub fn trainable(&mut self) -> &mut dyn Trainable<f32> {
        match self {
            Model::Jsc(m) => m,
            Model::Analog(m) => m,
            Model::Codec(m) => m,
        }
    }

    fn params(&self) -> &dyn HasParams<f32> {
        match self {
            Model::Jsc(m) => m,
            Model::Analog(m) => m,
            Model::Codec(m) => m,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Jsc(_) => "jsc",
            Model::Analog(_) => "analog",
            Model::Codec(_) => "codec",
        }
    }

    fn config_meta(&self) -> Result<CheckpointMeta> {
        match self {
            Model::Jsc(m) => CheckpointMeta::new(self.kind(), m.config()),
            Model::Analog(m) => CheckpointMeta::new(self.kind(), m.config()),
            Model::Codec(m) => {
                let mut meta = CheckpointMeta::new(self.kind(), m.codec.config())?;
                meta.training = serde_json::json!({ "lambda": m.lambda });
                Ok(meta)
            }
        }
    }

    /// Save parameters with the architecture config and `training` metadata.
    pub fn save(&self, path: &Path, training: serde_json::Value) -> Result<()> {
        let mut meta = self.config_meta()?;
        if let serde_json::Value::Object(extra) = training {
            if let serde_json::Value::Object(ref mut base) = meta.training {
                base.extend(extra);
            } else {
                meta.training = serde_json::Value::Object(extra);
            }
        }
        save_checkpoint(path, &ParamsRef(self.params()), &meta)
    }

    pub fn load(path: &Path) -> Result<(Self, CheckpointMeta)> {
        let meta = read_meta(path)?;
        let mut model = match meta.kind.as_str() {
            "jsc" => Model::Jsc(JscModel::new(meta.config_as::<JscConfig>()?, 0)?),
            "analog" => Model::Analog(AnalogChainModel::new(meta.config_as::<AnalogChainConfig>()?, 0)?),
            "codec" => {
                let lambda = meta.training.get("lambda").and_then(|v| v.as_f64()).unwrap_or(1.0);
                let cfg = meta.config_as::<CompressorConfig>()?;
                Model::Codec(RdModel {
                    codec: HyperpriorCompressor::new(cfg, &mut rng::stream(0, StreamId::init(1)))?,
                    lambda,
                })
            }
            other => return Err(Error::Checkpoint(format!("unknown model kind {other}"))),
        };
        let meta = match &mut model {
            Model::Jsc(m) => load_checkpoint(path, m)?,
            Model::Analog(m) => load_checkpoint(path, m)?,
            Model::Codec(m) => load_checkpoint(path, m)?,
        };
        Ok((model, meta))
    }

    pub fn into_jsc(self) -> Result<JscModel<f32>> {
        match self {
            Model::Jsc(m) => Ok(m),
            _ => Err(Error::Checkpoint("expected a JSC checkpoint".into())),
        }
    }

    pub fn into_analog(self) -> Result<AnalogChainModel<f32>> {
        match self {
            Model::Analog(m) => Ok(m),
            _ => Err(Error::Checkpoint("expected an analog checkpoint".into())),
        }
    }

    pub fn into_codec(self) -> Result<RdModel<f32>> {
        match self {
            Model::Codec(m) => Ok(m),
            _ => Err(Error::Checkpoint("expected a codec checkpoint".into())),
        }
    }
}

/// Adapter so a trait object can be handed to the generic checkpoint writer.
struct ParamsRef<'m>(&'m dyn HasParams<f32>);

impl HasParams<f32> for ParamsRef<'_> {
    fn collect_params<'a>(&'a self, out: &mut jsc_core::nn::ParamRefs<'a, f32>) {
        self.0.collect_params(out)
    }

    fn collect_params_mut<'a>(&'a mut self, _out: &mut jsc_core::nn::ParamMuts<'a, f32>) {
        unreachable!("read-only view")
    }
}
