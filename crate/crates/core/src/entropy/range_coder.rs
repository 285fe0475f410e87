//! Byte-oriented range coder with a 56-bit window (carry-propagating,
//! LZMA-style cache) and 16-bit frequencies.
//!
//! The stream is the big-endian byte expansion of a single number inside
//! the final coding interval. The encoder flushes the shortest such number
//! and the decoder reads implicit zero bytes past the end. For a stream of
//! `L` bytes a correct decode consumes exactly `L + 6` bytes and finishes
//! with `code < 2^48`; both are checked to detect desynchronization.

use super::cdf::{CdfTable, PRECISION, TOTAL_FREQ};
use crate::error::{Error, Result};

const WINDOW_BITS: u32 = 56;
const TOP: u64 = 1 << 48;
const WINDOW_MASK: u64 = (1 << WINDOW_BITS) - 1;
const LOW_MASK: u64 = TOP - 1;
const INIT_BYTES: usize = 7;

pub struct RangeEncoder {
    low: u64,
    range: u64,
    cache: u8,
    pending: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: WINDOW_MASK,
            cache: 0,
            pending: 1,
            out: Vec::new(),
        }
    }

    fn shift_low(&mut self) {
        if (self.low & WINDOW_MASK) < (0xFF << 48) || self.low > WINDOW_MASK {
            let carry = (self.low >> WINDOW_BITS) as u8;
            let mut byte = self.cache;
            while self.pending > 0 {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.pending -= 1;
            }
            self.cache = ((self.low >> 48) & 0xFF) as u8;
        }
        self.pending += 1;
        self.low = (self.low & LOW_MASK) << 8;
    }

    fn normalize(&mut self) {
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    /// Code the interval `[start, start + freq)` out of `2^bits`.
    fn encode_interval(&mut self, start: u32, freq: u32, bits: u32) {
        let r = self.range >> bits;
        self.low += r * start as u64;
        if start + freq == 1 << bits {
            self.range -= r * start as u64;
        } else {
            self.range = r * freq as u64;
        }
        self.normalize();
    }

    /// Equiprobable `bits`-bit value (`bits <= 16`).
    pub fn encode_bits(&mut self, value: u32, bits: u32) {
        debug_assert!((1..=PRECISION).contains(&bits) && value < (1 << bits));
        self.encode_interval(value, 1, bits);
    }

    fn encode_wide(&mut self, value: u64, bits: u32) {
        let mut remaining = bits;
        while remaining > 0 {
            let chunk = remaining.min(PRECISION);
            remaining -= chunk;
            self.encode_bits(((value >> remaining) & ((1 << chunk) - 1)) as u32, chunk);
        }
    }

    pub fn encode(&mut self, value: i32, table: &CdfTable) {
        match table.index_of(value) {
            Some(i) => {
                let c = table.cdf();
                self.encode_interval(c[i], c[i + 1] - c[i], PRECISION);
            }
            None => {
                let e = table.escape_index();
                let c = table.cdf();
                self.encode_interval(c[e], c[e + 1] - c[e], PRECISION);
                let range = table.range();
                let (side, dist) = if (value as i64) < range.min as i64 {
                    (0, range.min as i64 - value as i64 - 1)
                } else {
                    (1, value as i64 - range.max as i64 - 1)
                };
                self.encode_bits(side, 1);
                // Exp-Golomb order 0 of dist
                let m = dist as u64 + 1;
                let nb = 63 - m.leading_zeros();
                for _ in 0..nb {
                    self.encode_bits(0, 1);
                }
                self.encode_bits(1, 1);
                self.encode_wide(m & ((1u64 << nb) - 1), nb);
            }
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        // shortest value in [low, low + range): round up to a multiple of TOP
        self.low = (self.low + LOW_MASK) & !LOW_MASK;
        self.shift_low();
        self.shift_low();
        debug_assert_eq!(self.out.first().copied(), Some(0));
        self.out.remove(0);
        self.out
    }
}

pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u64,
    range: u64,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        let mut d = RangeDecoder {
            data,
            pos: 0,
            code: 0,
            range: WINDOW_MASK,
        };
        for _ in 0..INIT_BYTES {
            d.code = (d.code << 8) | d.next_byte() as u64;
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.data.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    fn normalize(&mut self) {
        while self.range < TOP {
            self.range <<= 8;
            self.code = ((self.code << 8) | self.next_byte() as u64) & WINDOW_MASK;
        }
    }

    fn target(&self, bits: u32) -> (u64, u32) {
        let r = self.range >> bits;
        let q = (self.code / r).min((1 << bits) - 1);
        (r, q as u32)
    }

    fn consume(&mut self, r: u64, start: u32, freq: u32, bits: u32) {
        self.code -= r * start as u64;
        if start + freq == 1 << bits {
            self.range -= r * start as u64;
        } else {
            self.range = r * freq as u64;
        }
        self.normalize();
    }

    pub fn decode_bits(&mut self, bits: u32) -> u32 {
        let (r, q) = self.target(bits);
        self.consume(r, q, 1, bits);
        q
    }

    fn decode_wide(&mut self, bits: u32) -> u64 {
        let mut value = 0u64;
        let mut remaining = bits;
        while remaining > 0 {
            let chunk = remaining.min(PRECISION);
            remaining -= chunk;
            value = (value << chunk) | self.decode_bits(chunk) as u64;
        }
        value
    }

    pub fn decode(&mut self, table: &CdfTable) -> Result<i32> {
        let (r, q) = self.target(PRECISION);
        let i = table.lookup(q);
        let c = table.cdf();
        self.consume(r, c[i], c[i + 1] - c[i], PRECISION);
        if i != table.escape_index() {
            return Ok(table.offset() + i as i32);
        }
        let side = self.decode_bits(1);
        let mut nb = 0u32;
        while self.decode_bits(1) == 0 {
            nb += 1;
            if nb > 40 {
                return Err(Error::Coder("escape prefix too long (stream desync)".into()));
            }
        }
        let m = (1u64 << nb) | self.decode_wide(nb);
        let dist = m as i64 - 1;
        let range = table.range();
        let v = if side == 0 {
            range.min as i64 - 1 - dist
        } else {
            range.max as i64 + 1 + dist
        };
        i32::try_from(v).map_err(|_| Error::Coder("escaped value out of range (stream desync)".into()))
    }

    /// Verify that the stream was consumed exactly as the encoder produced it.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.data.len() + INIT_BYTES - 1 {
            return Err(Error::Coder(format!(
                "stream desync: consumed {} bytes of a {}-byte stream",
                self.pos.min(self.data.len()),
                self.data.len()
            )));
        }
        if self.code >= TOP {
            return Err(Error::Coder("stream desync: trailing state mismatch".into()));
        }
        Ok(())
    }
}

pub fn range_encode(symbols: &[i32], tables: &[&CdfTable]) -> Result<Vec<u8>> {
    if symbols.len() != tables.len() {
        return Err(Error::shape(format!(
            "{} symbols but {} tables",
            symbols.len(),
            tables.len()
        )));
    }
    let mut enc = RangeEncoder::new();
    for (&s, t) in symbols.iter().zip(tables) {
        enc.encode(s, t);
    }
    Ok(enc.finish())
}

pub fn range_decode(bytes: &[u8], tables: &[&CdfTable], count: usize) -> Result<Vec<i32>> {
    if tables.len() != count {
        return Err(Error::shape(format!("{count} symbols but {} tables", tables.len())));
    }
    let mut dec = RangeDecoder::new(bytes);
    let out = tables.iter().map(|t| dec.decode(t)).collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    Ok(out)
}

// keep the 16-bit invariant visible to readers of this file
const _: () = assert!(TOTAL_FREQ == 1 << 16);
