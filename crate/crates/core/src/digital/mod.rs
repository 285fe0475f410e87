//! Digital core-network hops: QAM, LDPC coding and the ideal bit pipe.

mod ldpc;
mod link;
mod qam;

pub use ldpc::{LdpcCode, ParityMatrix};
pub use link::{link_transmit, measure_per, CodedModConfig, CodedModScheme, LinkKind, LinkMode, LinkReport};
pub use qam::{qam_demodulate_llr, qam_modulate, QamOrder};
