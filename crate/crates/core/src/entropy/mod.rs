//! Lossless coding of integer latents: quantized CDF tables, an integer-only
//! range coder and the self-describing bitstream container.

mod bitstream;
mod cdf;
mod range_coder;

pub use bitstream::{bits_to_bytes, bytes_to_bits, Bitstream, LatentDims, HEADER_LEN, MAGIC, VERSION};
pub use cdf::{
    build_cdf_gaussian, gaussian_bin_probability, CdfTable, SymbolRange, MAX_TABLE_SYMBOLS,
    PRECISION, TOTAL_FREQ,
};
pub use range_coder::{range_decode, range_encode, RangeDecoder, RangeEncoder};
