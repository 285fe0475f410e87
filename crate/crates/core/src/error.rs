use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("entropy coder: {0}")]
    Coder(String),

    #[error("malformed bitstream: {0}")]
    Bitstream(String),

    #[error("transport failure on hop {hop}: {reason}")]
    Transport { hop: usize, reason: String },

    #[error("insufficient samples: need at least {needed} distinct values, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
