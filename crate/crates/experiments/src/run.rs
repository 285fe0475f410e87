//! Run directories and the training entry point shared by the CLI.

use std::path::{Path, PathBuf};

use jsc_core::Result;
use serde::Serialize;

use crate::config::TrainConfig;
use crate::dataset::{load_dataset, Split};
use crate::models::Model;
use crate::report::write_csv;
use crate::train::{fit, EpochLog, TrainOutcome};

/// `<root>/{config.toml, checkpoints/, records/, plots/}`.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["checkpoints", "records", "plots"] {
            std::fs::create_dir_all(root.join(sub))?;
        }
        Ok(RunDir { root })
    }

    pub fn checkpoint(&self, tag: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{tag}.safetensors"))
    }

    pub fn record(&self, name: &str, ext: &str) -> PathBuf {
        self.root.join("records").join(format!("{name}.{ext}"))
    }

    pub fn plot(&self, name: &str, ext: &str) -> PathBuf {
        self.root.join("plots").join(format!("{name}.{ext}"))
    }

    /// Keep a copy of the config a command ran with.
    pub fn save_config<C: Serialize>(&self, name: &str, cfg: &C) -> Result<()> {
        let text = toml::to_string_pretty(cfg).map_err(|e| jsc_core::Error::InvalidArgument(e.to_string()))?;
        std::fs::write(self.root.join(format!("{name}.toml")), text)?;
        Ok(())
    }
}

const CURVE_HEADER: [&str; 9] = [
    "epoch",
    "lr",
    "train_loss",
    "train_mse",
    "train_bpp",
    "val_loss",
    "val_mse",
    "val_bpp",
    "seconds",
];

/// Train one model, writing `checkpoints/<tag>.safetensors` (best
/// validation epoch) and `records/<tag>_curve.csv`.
pub fn train_run(cfg: &TrainConfig, run: &RunDir, data_dir: &Path) -> Result<(PathBuf, TrainOutcome)> {
    cfg.validate()?;
    let tag = cfg.tag();
    run.save_config(&format!("config_{tag}"), cfg)?;
    let train = load_dataset(&cfg.data, Split::Train, data_dir)?;
    let val = load_dataset(&cfg.data, Split::Val, data_dir)?;
    log::info!("{tag}: {} training / {} validation images", train.len(), val.len());
    let mut model = Model::build(cfg)?;
    let outcome = fit(model.trainable(), cfg, &train, &val, |e: &EpochLog| {
        log::info!(
            "{tag} epoch {:>3}  lr {:.2e}  train {:.5}  val {:.5} (mse {:.6}, bpp {:.4})  {:.1}s",
            e.epoch,
            e.lr,
            e.train_loss,
            e.val_loss,
            e.val_mse,
            e.val_bpp,
            e.seconds
        );
    })?;
    write_csv(&run.record(&format!("{tag}_curve"), "csv"), &outcome.curve, &CURVE_HEADER)?;
    let path = run.checkpoint(&tag);
    model.save(
        &path,
        serde_json::json!({
            "train_config": cfg,
            "best_epoch": outcome.best_epoch,
            "best_val_loss": outcome.best_val_loss,
            "epochs_run": outcome.curve.len(),
        }),
    )?;
    Ok((path, outcome))
}
