//! Hybrid analog/digital image transmission over multi-hop relay networks.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for common model types.

pub mod baselines;
pub mod channel;
pub mod checkpoint;
pub mod compressor;
pub mod deepjscc;
pub mod digital;
pub mod entropy;
pub mod error;
pub mod hops;
pub mod hybrid;
pub mod image;
pub mod nn;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Image32 = image::ImageTensor<f32>;
pub type Image64 = image::ImageTensor<f64>;
pub type Symbols32 = channel::SymbolVector<f32>;
pub type Symbols64 = channel::SymbolVector<f64>;
pub type AnalogChain32 = deepjscc::AnalogChainModel<f32>;
pub type AnalogChain64 = deepjscc::AnalogChainModel<f64>;
pub type Compressor32 = compressor::HyperpriorCompressor<f32>;
pub type Compressor64 = compressor::HyperpriorCompressor<f64>;
pub type Jsc32 = hybrid::JscModel<f32>;
pub type Jsc64 = hybrid::JscModel<f64>;
