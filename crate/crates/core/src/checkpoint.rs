//! Self-describing model files: named parameter tensors in safetensors
//! layout, with a JSON header entry holding the model kind, its config,
//! training metadata and any designed quantizer codebook.

use std::collections::HashMap;
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};

use crate::baselines::NaiveQuantizer;
use crate::error::{Error, Result};
use crate::nn::HasParams;
use crate::scalar::Scalar;

const META_KEY: &str = "jsc";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: u32,
    /// Model family, e.g. `"jsc"`, `"af"`, `"pf"`, `"codec"`.
    pub kind: String,
    /// Serialized model config needed to rebuild the architecture.
    pub config: serde_json::Value,
    #[serde(default)]
    pub training: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantizer: Option<NaiveQuantizer>,
}

impl CheckpointMeta {
    pub fn new(kind: impl Into<String>, config: &impl Serialize) -> Result<Self> {
        Ok(CheckpointMeta {
            format: FORMAT_VERSION,
            kind: kind.into(),
            config: serde_json::to_value(config).map_err(meta_err)?,
            training: serde_json::Value::Null,
            quantizer: None,
        })
    }

    pub fn config_as<C: for<'de> Deserialize<'de>>(&self) -> Result<C> {
        serde_json::from_value(self.config.clone()).map_err(meta_err)
    }
}

fn meta_err(e: impl std::fmt::Display) -> Error {
    Error::Checkpoint(e.to_string())
}

fn dtype_of<T: Scalar>() -> Dtype {
    match T::DTYPE {
        "f32" => Dtype::F32,
        _ => Dtype::F64,
    }
}

fn encode<T: Scalar>(values: impl Iterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for v in values {
        match dtype_of::<T>() {
            Dtype::F32 => out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
            _ => out.extend_from_slice(&v.as_f64().to_le_bytes()),
        }
    }
    out
}

fn decode<T: Scalar>(view: &TensorView<'_>) -> Result<Vec<T>> {
    let data = view.data();
    match view.dtype() {
        Dtype::F32 => Ok(data
            .chunks_exact(4)
            .map(|b| T::of(f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64))
            .collect()),
        Dtype::F64 => Ok(data
            .chunks_exact(8)
            .map(|b| T::of(f64::from_le_bytes(b.try_into().expect("8 bytes"))))
            .collect()),
        other => Err(Error::Checkpoint(format!("unsupported dtype {other:?}"))),
    }
}

/// Serialize every parameter of `model` in the scalar type of `T`.
pub fn save_checkpoint<T: Scalar, M: HasParams<T>>(path: &Path, model: &M, meta: &CheckpointMeta) -> Result<()> {
    let mut params = Vec::new();
    model.collect_params(&mut params);
    let buffers: Vec<(String, Vec<usize>, Vec<u8>)> = params
        .iter()
        .map(|(name, p)| (name.clone(), p.value.shape().to_vec(), encode(p.value.iter().copied())))
        .collect();
    let views = buffers
        .iter()
        .map(|(name, shape, bytes)| {
            TensorView::new(dtype_of::<T>(), shape.clone(), bytes)
                .map(|v| (name.clone(), v))
                .map_err(meta_err)
        })
        .collect::<Result<Vec<_>>>()?;
    let header = HashMap::from([(
        META_KEY.to_string(),
        serde_json::to_string(meta).map_err(meta_err)?,
    )]);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    safetensors::serialize_to_file(views, &Some(header), path).map_err(meta_err)
}

/// Read only the metadata entry.
pub fn read_meta(path: &Path) -> Result<CheckpointMeta> {
    let bytes = std::fs::read(path)?;
    parse_meta(&bytes)
}

fn parse_meta(bytes: &[u8]) -> Result<CheckpointMeta> {
    let (_, header) = SafeTensors::read_metadata(bytes).map_err(meta_err)?;
    let raw = header
        .metadata()
        .as_ref()
        .and_then(|m| m.get(META_KEY))
        .ok_or_else(|| Error::Checkpoint("missing metadata entry".into()))?;
    let meta: CheckpointMeta = serde_json::from_str(raw).map_err(meta_err)?;
    if meta.format != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {}", meta.format)));
    }
    Ok(meta)
}

/// Overwrite the parameters of `model` (already built from the stored
/// config) with the stored tensors. Names and shapes must match exactly.
pub fn load_checkpoint<T: Scalar, M: HasParams<T>>(path: &Path, model: &mut M) -> Result<CheckpointMeta> {
    let bytes = std::fs::read(path)?;
    let meta = parse_meta(&bytes)?;
    let tensors = SafeTensors::deserialize(&bytes).map_err(meta_err)?;
    let mut params = Vec::new();
    model.collect_params_mut(&mut params);
    if params.len() != tensors.len() {
        return Err(Error::Checkpoint(format!(
            "model has {} tensors, file has {}",
            params.len(),
            tensors.len()
        )));
    }
    for (name, p) in params {
        let view = tensors
            .tensor(&name)
            .map_err(|_| Error::Checkpoint(format!("missing tensor {name}")))?;
        if view.shape() != p.value.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: shape {:?} in file, {:?} in model",
                view.shape(),
                p.value.shape()
            )));
        }
        let values = decode::<T>(&view)?;
        p.value.iter_mut().zip(values).for_each(|(d, s)| *d = s);
    }
    Ok(meta)
}
