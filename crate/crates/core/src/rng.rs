//! Reproducible random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] keyed by a
//! 64-bit seed and a 64-bit stream id. Streams with the same seed and
//! different ids are independent, so a per-image or per-hop stream can be
//! derived as `stream(seed, StreamId::hop(image, hop))` without any shared
//! mutable generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream identifier layout: `[purpose:8 | item:40 | sub:16]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId(pub u64);

impl StreamId {
    pub const fn new(purpose: u8, item: u64, sub: u16) -> Self {
        StreamId(((purpose as u64) << 56) | ((item & 0xFF_FFFF_FFFF) << 16) | sub as u64)
    }

    /// Channel noise on hop `hop` for image `item`.
    pub const fn hop(item: u64, hop: u16) -> Self {
        Self::new(1, item, hop)
    }

    /// Uniform quantization noise for image `item`.
    pub const fn quantization(item: u64, tensor: u16) -> Self {
        Self::new(2, item, tensor)
    }

    /// Data ordering for `epoch`.
    pub const fn shuffle(epoch: u64) -> Self {
        Self::new(3, epoch, 0)
    }

    /// Parameter initialization.
    pub const fn init(module: u16) -> Self {
        Self::new(4, 0, module)
    }

    /// Training-step noise for `step` within an epoch.
    pub const fn train_step(epoch: u64, step: u16) -> Self {
        Self::new(5, epoch, step)
    }

    /// Coded-link noise and payload for block `block` of transmission `item`.
    pub const fn block(item: u64, block: u16) -> Self {
        Self::new(7, item, block)
    }

    /// Free-form streams for tests and Monte Carlo tools.
    pub const fn aux(item: u64) -> Self {
        Self::new(6, item, 0)
    }
}

/// Independent per-item seed, for APIs that take a single seed per image.
pub fn item_seed(seed: u64, item: u64) -> u64 {
    use rand::RngCore;
    stream(seed, StreamId::new(8, item, 0)).next_u64()
}

pub fn stream(seed: u64, id: StreamId) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id.0);
    rng
}
