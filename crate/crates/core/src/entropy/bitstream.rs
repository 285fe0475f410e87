//! Container for the digital payload `b_1 = (b_v, b_z)`.
//!
//! Layout (little-endian, byte aligned, fixed 24-byte header):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `JSCB`                  |
//! | 4      | 1    | version (`1`)                 |
//! | 5      | 1    | flags (reserved, `0`)         |
//! | 6      | 2    | image height `H`              |
//! | 8      | 2    | image width `W`               |
//! | 10     | 2    | latent channels `C_z`         |
//! | 12     | 2    | hyper-latent channels `C_v`   |
//! | 14     | 2    | reserved (`0`)                |
//! | 16     | 4    | length of `b_v` in bytes      |
//! | 20     | 4    | length of `b_z` in bytes      |
//! | 24     | ..   | `b_v` then `b_z`              |
//!
//! Bytes after the payload are accepted only if they are zero (block
//! padding added by the transport).

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"JSCB";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentDims {
    pub height: u16,
    pub width: u16,
    pub c_z: u16,
    pub c_v: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub dims: LatentDims,
    pub b_v: Vec<u8>,
    pub b_z: Vec<u8>,
}

impl Bitstream {
    pub fn pack(b_v: Vec<u8>, b_z: Vec<u8>, dims: LatentDims) -> Self {
        Bitstream { dims, b_v, b_z }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(0);
        for v in [self.dims.height, self.dims.width, self.dims.c_z, self.dims.c_v, 0] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.b_v.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.b_z.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.b_v);
        out.extend_from_slice(&self.b_z);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Bitstream(format!(
                "truncated header: {} of {HEADER_LEN} bytes",
                bytes.len()
            )));
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::Bitstream("bad magic".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::Bitstream(format!("unsupported version {}", bytes[4])));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        if bytes[5] != 0 || u16_at(14) != 0 {
            return Err(Error::Bitstream("reserved header fields are set".into()));
        }
        let dims = LatentDims {
            height: u16_at(6),
            width: u16_at(8),
            c_z: u16_at(10),
            c_v: u16_at(12),
        };
        let (lv, lz) = (u32_at(16), u32_at(20));
        let end = HEADER_LEN + lv + lz;
        if bytes.len() < end {
            return Err(Error::Bitstream(format!(
                "truncated payload: header announces {} bytes, got {}",
                lv + lz,
                bytes.len() - HEADER_LEN
            )));
        }
        if bytes[end..].iter().any(|&b| b != 0) {
            return Err(Error::Bitstream("non-zero bytes after payload".into()));
        }
        Ok(Bitstream {
            dims,
            b_v: bytes[HEADER_LEN..HEADER_LEN + lv].to_vec(),
            b_z: bytes[HEADER_LEN + lv..end].to_vec(),
        })
    }

    /// Total container size in bytes.
    pub fn byte_len(&self) -> usize {
        HEADER_LEN + self.b_v.len() + self.b_z.len()
    }

    /// `#b_1` counted as payload bits (header excluded).
    pub fn payload_bits(&self) -> usize {
        8 * (self.b_v.len() + self.b_z.len())
    }

    pub fn total_bits(&self) -> usize {
        8 * self.byte_len()
    }
}

/// MSB-first bit expansion.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1))
        .collect()
}

/// Inverse of [`bytes_to_bits`]; a partial final byte is zero-filled.
pub fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b & 1) << (7 - i))))
        .collect()
}
