use std::collections::HashMap;

use ndarray::{ArrayD, Zip};
use serde::{Deserialize, Serialize};

use super::ParamMuts;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction; moment buffers are keyed by parameter name.
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    moments: HashMap<String, (ArrayD<T>, ArrayD<T>)>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: ParamMuts<'_, T>) {
        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let lr_t = c.lr * (1.0 - c.beta2.powf(t)).sqrt() / (1.0 - c.beta1.powf(t));
        let (b1, b2, eps, lr_t) = (T::of(c.beta1), T::of(c.beta2), T::of(c.eps), T::of(lr_t));
        for (name, p) in params {
            let (m, v) = self.moments.entry(name).or_insert_with(|| {
                (
                    ArrayD::zeros(p.value.raw_dim()),
                    ArrayD::zeros(p.value.raw_dim()),
                )
            });
            Zip::from(&mut p.value)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    *w -= lr_t * *m / (v.sqrt() + eps);
                });
        }
    }
}
