//! Byte-oriented range coder with carry propagation.
//!
//! The interval width is a 64-bit integer kept above `2^56` by
//! renormalization, and `low` carries one extra bit for the pending carry
//! (the same cache scheme as the LZMA coder, widened). Symbol frequencies
//! are integers with `total <= 2^16`, so all arithmetic is exact and the
//! byte stream is identical on every platform.

use crate::error::{Error, Result};

const TOP: u64 = 1 << 56;
const LOW_MASK: u128 = (1u128 << 56) - 1;
/// Largest admissible frequency total.
pub const MAX_TOTAL: u32 = 1 << 16;

#[derive(Debug)]
pub struct RangeEncoder {
    low: u128,
    range: u64,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
    // the first emitted byte is always zero and is dropped
    skip_first: bool,
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
            range: u64::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
            skip_first: true,
        }
    }

    fn emit(&mut self, byte: u8) {
        if self.skip_first {
            debug_assert_eq!(byte, 0);
            self.skip_first = false;
        } else {
            self.out.push(byte);
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u64) < 0xff00_0000_0000_0000 || self.low >> 64 != 0 {
            let carry = (self.low >> 64) as u8;
            let mut temp = self.cache;
            loop {
                self.emit(temp.wrapping_add(carry));
                temp = 0xff;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 56) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & LOW_MASK) << 8;
    }

    /// Codes the interval `[cum, cum + freq)` out of `total`.
    pub fn encode(&mut self, cum: u32, freq: u32, total: u32) -> Result<()> {
        if freq == 0 || total == 0 || total > MAX_TOTAL || cum + freq > total {
            return Err(Error::Model(format!(
                "invalid coding interval [{cum}, {}) of {total}",
                u64::from(cum) + u64::from(freq)
            )));
        }
        let r = self.range / u64::from(total);
        self.low += u128::from(r * u64::from(cum));
        if cum + freq == total {
            // the last symbol takes the rounding remainder
            self.range -= r * u64::from(cum);
        } else {
            self.range = r * u64::from(freq);
        }
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
        Ok(())
    }

    /// Flushes the shortest byte string that still identifies the final
    /// interval. The decoder reads zeros past the end.
    pub fn finish(mut self) -> Vec<u8> {
        // pick the value in [low, low + range) with the most trailing zero bytes
        for zeros in (0..8).rev() {
            let mask: u128 = (1u128 << (8 * zeros)) - 1;
            let v = (self.low + mask) & !mask;
            if v < self.low + u128::from(self.range) {
                self.low = v;
                for _ in 0..(8 - zeros + 1) {
                    self.shift_low();
                }
                break;
            }
        }
        while self.out.last() == Some(&0) {
            self.out.pop();
        }
        self.out
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u64,
    range: u64,
    // range / total from the last `target` call
    r: u64,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        let mut d = RangeDecoder {
            data,
            pos: 0,
            code: 0,
            range: u64::MAX,
            r: 0,
        };
        for _ in 0..8 {
            d.code = (d.code << 8) | u64::from(d.next_byte());
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.data.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Value in `[0, total)` locating the next symbol; follow with
    /// [`RangeDecoder::consume`] for the symbol whose interval contains it.
    pub fn target(&mut self, total: u32) -> Result<u32> {
        if total == 0 || total > MAX_TOTAL {
            return Err(Error::Model(format!("invalid frequency total {total}")));
        }
        self.r = self.range / u64::from(total);
        let v = self.code / self.r;
        Ok(v.min(u64::from(total - 1)) as u32)
    }

    /// Removes the interval `[cum, cum + freq)` found via [`Self::target`].
    pub fn consume(&mut self, cum: u32, freq: u32, total: u32) -> Result<()> {
        let start = self.r * u64::from(cum);
        if freq == 0 || cum + freq > total || start > self.code {
            return Err(Error::integrity("range decoder desynchronized"));
        }
        self.code -= start;
        if cum + freq == total {
            self.range -= start;
        } else {
            self.range = self.r * u64::from(freq);
        }
        if self.code >= self.range {
            return Err(Error::integrity("range decoder desynchronized"));
        }
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | u64::from(self.next_byte());
        }
        Ok(())
    }
}
