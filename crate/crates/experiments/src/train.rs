//! Generic training loop: Adam, plateau learning-rate decay, best-checkpoint
//! selection on validation loss.

use std::time::Instant;

use jsc_core::nn::{Adam, AdamConfig, LossTerms, Trainable};
use jsc_core::rng::{self, StreamId};
use jsc_core::{Error, Result};
use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::dataset::Dataset;

/// Multiplies the learning rate by `factor` once `patience` consecutive
/// epochs pass without a new best validation loss; the count then restarts.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    lr: f64,
    best: f64,
    bad_epochs: usize,
    reductions: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        PlateauScheduler {
            factor,
            patience,
            lr,
            best: f64::INFINITY,
            bad_epochs: 0,
            reductions: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn reductions(&self) -> usize {
        self.reductions
    }

    /// Record one validation loss; returns true when the rate was lowered.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.bad_epochs = 0;
            return false;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.lr *= self.factor;
            self.bad_epochs = 0;
            self.reductions += 1;
            return true;
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_mse: f64,
    pub train_bpp: f64,
    pub val_loss: f64,
    pub val_mse: f64,
    pub val_bpp: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub curve: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

fn snapshot(model: &dyn Trainable<f32>) -> Vec<ArrayD<f32>> {
    let mut ps = Vec::new();
    model.collect_params(&mut ps);
    ps.into_iter().map(|(_, p)| p.value.clone()).collect()
}

fn restore(model: &mut dyn Trainable<f32>, values: Vec<ArrayD<f32>>) {
    let mut ps = Vec::new();
    model.collect_params_mut(&mut ps);
    for ((_, p), v) in ps.into_iter().zip(values) {
        p.value = v;
    }
}

#[derive(Default)]
struct Mean {
    loss: f64,
    mse: f64,
    bpp: f64,
    n: f64,
}

impl Mean {
    fn add(&mut self, t: LossTerms, weight: usize) {
        let w = weight as f64;
        self.loss += t.loss * w;
        self.mse += t.mse * w;
        self.bpp += t.bpp * w;
        self.n += w;
    }

    fn get(&self) -> LossTerms {
        let n = self.n.max(1.0);
        LossTerms {
            loss: self.loss / n,
            mse: self.mse / n,
            bpp: self.bpp / n,
        }
    }
}

/// Validation loss with fixed noise streams, so epochs are comparable.
pub fn validate(model: &dyn Trainable<f32>, val: &Dataset, batch: usize, seed: u64) -> LossTerms {
    let mut m = Mean::default();
    for (start, x) in val.chunks(batch) {
        let mut r = rng::stream(seed ^ 0x7661_6c69_6461_7465, StreamId::aux(start as u64));
        m.add(model.eval_batch(&x, &mut r), x.dim().0);
    }
    m.get()
}

/// Train `model` for `cfg.epochs` epochs and leave it holding the
/// parameters of the epoch with the lowest validation loss.
pub fn fit(
    model: &mut dyn Trainable<f32>,
    cfg: &TrainConfig,
    train: &Dataset,
    val: &Dataset,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be nonempty".into()));
    }
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.plateau_factor, cfg.plateau_patience);
    let mut best = (usize::MAX, f64::INFINITY, snapshot(model));
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        adam.set_lr(sched.lr());
        let order = train.epoch_order(cfg.seed, epoch as u64);
        let mut m = Mean::default();
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = train.gather(idx);
            let mut r = rng::stream(cfg.seed, StreamId::train_step(epoch as u64, step as u16));
            model.zero_grad();
            let t = model.train_batch(&x, &mut r);
            if !t.loss.is_finite() {
                return Err(Error::Degenerate("training loss diverged (non-finite value)"));
            }
            let mut ps = Vec::new();
            model.collect_params_mut(&mut ps);
            adam.step(ps);
            m.add(t, idx.len());
        }
        let tr = m.get();
        let va = validate(model, val, cfg.batch_size, cfg.seed);
        if !va.loss.is_finite() {
            return Err(Error::Degenerate("validation loss diverged (non-finite value)"));
        }
        let log = EpochLog {
            epoch,
            lr: sched.lr(),
            train_loss: tr.loss,
            train_mse: tr.mse,
            train_bpp: tr.bpp,
            val_loss: va.loss,
            val_mse: va.mse,
            val_bpp: va.bpp,
            seconds: t0.elapsed().as_secs_f64(),
        };
        on_epoch(&log);
        if va.loss < best.1 {
            best = (epoch, va.loss, snapshot(model));
        }
        sched.observe(va.loss);
        curve.push(log);
    }
    let (best_epoch, best_val_loss, values) = best;
    restore(model, values);
    Ok(TrainOutcome {
        curve,
        best_epoch,
        best_val_loss,
    })
}
