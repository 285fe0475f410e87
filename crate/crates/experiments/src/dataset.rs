//! Image sources: CIFAR-10 (binary release) and a procedural stand-in.
//!
//! CIFAR-10 is looked up under `$JSC_DATA_DIR/cifar-10-batches-bin`
//! (default `./data`) and downloaded there on first use when allowed.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use jsc_core::rng::{self, StreamId};
use jsc_core::{Error, Result};
use ndarray::{s, Array4, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const DATA_DIR_ENV: &str = "JSC_DATA_DIR";
pub const CIFAR_URL: &str = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz";
const CIFAR_DIR: &str = "cifar-10-batches-bin";
const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;
const CIFAR_PER_FILE: usize = 10_000;
/// Training images kept for validation, taken from the end of the 50k set.
pub const CIFAR_VAL: usize = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetName {
    Cifar10,
    /// Deterministic procedural images for smoke runs and tests.
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub name: DatasetName,
    pub max_train: Option<usize>,
    pub max_val: Option<usize>,
    pub max_test: Option<usize>,
    /// Synthetic image side length (multiple of 16).
    pub synthetic_size: usize,
    /// Synthetic split sizes `(train, val, test)`.
    pub synthetic_counts: (usize, usize, usize),
    pub download: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            name: DatasetName::Cifar10,
            max_train: None,
            max_val: None,
            max_test: None,
            synthetic_size: 32,
            synthetic_counts: (512, 64, 64),
            download: true,
        }
    }
}

impl DatasetConfig {
    pub fn image_dims(&self) -> (usize, usize, usize) {
        match self.name {
            DatasetName::Cifar10 => (3, 32, 32),
            DatasetName::Synthetic => (3, self.synthetic_size, self.synthetic_size),
        }
    }

    fn limit(&self, split: Split) -> Option<usize> {
        match split {
            Split::Train => self.max_train,
            Split::Val => self.max_val,
            Split::Test => self.max_test,
        }
    }
}

/// `N x C x H x W` images in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Array4<f32>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index order for one epoch; identical for identical `(seed, epoch)`.
    pub fn epoch_order(&self, seed: u64, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::stream(seed, StreamId::shuffle(epoch)));
        order
    }

    pub fn gather(&self, indices: &[usize]) -> Array4<f32> {
        self.images.select(Axis(0), indices)
    }

    /// Consecutive batches in stored order (evaluation).
    pub fn chunks(&self, batch: usize) -> impl Iterator<Item = (usize, Array4<f32>)> + '_ {
        let n = self.len();
        (0..n).step_by(batch.max(1)).map(move |start| {
            let end = (start + batch).min(n);
            (start, self.images.slice(s![start..end, .., .., ..]).to_owned())
        })
    }

    pub fn truncate(mut self, max: Option<usize>) -> Self {
        if let Some(m) = max {
            if m < self.len() {
                self.images = self.images.slice(s![..m, .., .., ..]).to_owned();
            }
        }
        self
    }
}

pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data"))
}

pub fn load_dataset(cfg: &DatasetConfig, split: Split, cache_dir: &Path) -> Result<Dataset> {
    let data = match cfg.name {
        DatasetName::Cifar10 => load_cifar(split, cache_dir, cfg.download)?,
        DatasetName::Synthetic => {
            let (tr, va, te) = cfg.synthetic_counts;
            let (count, offset) = match split {
                Split::Train => (tr, 0),
                Split::Val => (va, tr),
                Split::Test => (te, tr + va),
            };
            synthetic(count, cfg.synthetic_size, offset as u64)
        }
    };
    Ok(data.truncate(cfg.limit(split)))
}

fn load_cifar(split: Split, cache_dir: &Path, download: bool) -> Result<Dataset> {
    let dir = cache_dir.join(CIFAR_DIR);
    if !dir.join("test_batch.bin").exists() {
        if !download {
            return Err(Error::InvalidArgument(format!(
                "CIFAR-10 not found under {} and downloads are disabled",
                dir.display()
            )));
        }
        download_cifar(cache_dir)?;
    }
    let files: Vec<String> = match split {
        Split::Train | Split::Val => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
        Split::Test => vec!["test_batch.bin".into()],
    };
    let mut raw = Vec::with_capacity(files.len() * CIFAR_PER_FILE * CIFAR_RECORD);
    for f in &files {
        let path = dir.join(f);
        let mut bytes = Vec::new();
        File::open(&path)?.read_to_end(&mut bytes)?;
        if bytes.len() != CIFAR_PER_FILE * CIFAR_RECORD {
            return Err(Error::InvalidArgument(format!(
                "{}: expected {} bytes, found {}",
                path.display(),
                CIFAR_PER_FILE * CIFAR_RECORD,
                bytes.len()
            )));
        }
        raw.extend_from_slice(&bytes);
    }
    let all = decode_cifar_records(&raw);
    let n = all.dim().0;
    let images = match split {
        Split::Train => all.slice(s![..n - CIFAR_VAL, .., .., ..]).to_owned(),
        Split::Val => all.slice(s![n - CIFAR_VAL.., .., .., ..]).to_owned(),
        Split::Test => all,
    };
    Ok(Dataset { images })
}

/// Records of one label byte followed by 1024 R, G and B bytes each.
pub fn decode_cifar_records(raw: &[u8]) -> Array4<f32> {
    let n = raw.len() / CIFAR_RECORD;
    let mut out = Array4::zeros((n, 3, 32, 32));
    for (i, rec) in raw.chunks_exact(CIFAR_RECORD).enumerate() {
        let px = &rec[1..];
        out.slice_mut(s![i, .., .., ..])
            .as_slice_mut()
            .expect("standard layout")
            .iter_mut()
            .zip(px)
            .for_each(|(d, &b)| *d = b as f32 / 255.0);
    }
    out
}

fn download_cifar(cache_dir: &Path) -> Result<()> {
    log::info!("downloading CIFAR-10 into {}", cache_dir.display());
    std::fs::create_dir_all(cache_dir)?;
    let resp = ureq::get(CIFAR_URL)
        .call()
        .map_err(|e| Error::InvalidArgument(format!("CIFAR-10 download failed: {e}")))?;
    let gz = flate2::read::GzDecoder::new(resp.into_reader());
    tar::Archive::new(gz).unpack(cache_dir)?;
    Ok(())
}

/// Procedural images: smooth color gradients with a few filled discs and
/// bars, one image per index of stream `aux(offset + i)`.
pub fn synthetic(count: usize, size: usize, offset: u64) -> Dataset {
    let mut images = Array4::zeros((count, 3, size, size));
    let sz = size as f32;
    for i in 0..count {
        let mut r = rng::stream(0x5eed, StreamId::aux(offset + i as u64));
        let base: [f32; 3] = [r.gen(), r.gen(), r.gen()];
        let grad: Vec<(f32, f32)> = (0..3).map(|_| (r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5))).collect();
        let shapes: Vec<(f32, f32, f32, [f32; 3], bool)> = (0..r.gen_range(1..4))
            .map(|_| {
                (
                    r.gen_range(0.0..sz),
                    r.gen_range(0.0..sz),
                    r.gen_range(sz / 10.0..sz / 3.0),
                    [r.gen(), r.gen(), r.gen()],
                    r.gen_bool(0.5),
                )
            })
            .collect();
        for c in 0..3 {
            for y in 0..size {
                for x in 0..size {
                    let (fx, fy) = (x as f32 / sz, y as f32 / sz);
                    let mut v = base[c] + grad[c].0 * (fx - 0.5) + grad[c].1 * (fy - 0.5);
                    for &(cx, cy, rad, col, disc) in &shapes {
                        let (dx, dy) = (x as f32 - cx, y as f32 - cy);
                        let inside = if disc { dx * dx + dy * dy < rad * rad } else { dx.abs() < rad && dy.abs() < rad / 3.0 };
                        if inside {
                            v = col[c];
                        }
                    }
                    images[[i, c, y, x]] = v.clamp(0.0, 1.0);
                }
            }
        }
    }
    Dataset { images }
}
