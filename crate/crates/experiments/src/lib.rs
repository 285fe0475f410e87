//! Datasets, training, evaluation suites and reporting for the hybrid
//! multi-hop transmission models in `jsc-core`.

pub mod config;
pub mod dataset;
pub mod metrics;
pub mod models;
pub mod report;
pub mod run;
pub mod sweeps;
pub mod train;
