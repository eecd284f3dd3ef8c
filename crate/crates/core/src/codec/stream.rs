//! Bitstream layout. All integers are big-endian.
//!
//! ```text
//! "PPYC" version:u8 height:u32 width:u32 channels:u8 bit_depth:u8 L:u8
//! shift:u16 n_squeeze:[u8; L] mode:u8
//! flags:u8 coarse_bins:u8 neighbor_bins:u8
//! (static mode) M:u8, then for each of the L+1 streams:
//!     n_sets:u16, n_sets × mixture record, bucket map [u16; buckets]
//! lengths:[u64; L+1]
//! payloads F_1 .. F_L, coarsest
//! crc32 of the raw image bytes:u32
//! ```
//!
//! A mixture record is `M:u8` followed by `M` weights, `M` means and `M`
//! scales as f64.

use crate::error::{Error, Result};
use crate::image::{check_bit_depth, Shape};
use crate::mixture::LogisticMixtureParams;
use crate::pyramid::level_shapes;
use crate::scan::feasible_squeezes;

use super::context::ContextSpec;
use super::model::StaticStreamParams;

pub const MAGIC: &[u8; 4] = b"PPYC";
pub const VERSION: u8 = 1;
/// Largest image the decoder will allocate, in samples.
pub const MAX_SAMPLES: usize = 1 << 31;

const FLAG_NO_MODULO: u8 = 1;

/// Which probability model codes the streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelMode {
    #[default]
    Adaptive,
    Static,
}

impl ModelMode {
    fn to_byte(self) -> u8 {
        match self {
            ModelMode::Adaptive => 0,
            ModelMode::Static => 1,
        }
    }
}

/// Everything the decoder needs besides the payloads.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamHeader {
    pub shape: Shape,
    pub bit_depth: u8,
    pub levels: usize,
    /// Offset added (mod `2^b`) to difference symbols; 0 when disabled.
    pub shift: u16,
    /// Squeezes actually applied at levels `1..=L`.
    pub n_squeeze: Vec<u8>,
    pub mode: ModelMode,
    /// Raw removed samples are coded instead of modulo differences.
    pub no_modulo: bool,
    pub contexts: ContextSpec,
    /// Static-mode mixture size and per-stream parameters (`L + 1`
    /// entries, coarsest last).
    pub mixtures: u8,
    pub static_params: Vec<StaticStreamParams>,
}

/// Header, per-stream payloads (`F_1..F_L`, then coarsest) and checksum.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedStream {
    pub header: StreamHeader,
    pub payloads: Vec<Vec<u8>>,
    pub crc32: u32,
}

impl StreamHeader {
    /// Checks internal consistency: level shapes, squeeze counts, shift
    /// range and static-parameter layout.
    pub fn validate(&self) -> Result<()> {
        check_bit_depth(self.bit_depth).map_err(|e| Error::format(e.to_string()))?;
        let s = self.shape;
        if s.samples() == 0 {
            return Err(Error::format(format!("empty image shape {s}")));
        }
        if s.height
            .checked_mul(s.width)
            .and_then(|p| p.checked_mul(s.channels))
            .is_none_or(|n| n > MAX_SAMPLES)
        {
            return Err(Error::format(format!("image shape {s} too large")));
        }
        let shapes = level_shapes(s, self.levels).map_err(|e| Error::format(e.to_string()))?;
        if self.n_squeeze.len() != self.levels {
            return Err(Error::format(format!(
                "{} squeeze counts for {} levels",
                self.n_squeeze.len(),
                self.levels
            )));
        }
        for (i, &n) in self.n_squeeze.iter().enumerate() {
            let sh = shapes[i + 1];
            if feasible_squeezes(sh.height, sh.width, u32::from(n)) != u32::from(n) {
                return Err(Error::format(format!(
                    "level {}: {n} squeezes impossible on {sh}",
                    i + 1
                )));
            }
        }
        if u32::from(self.shift) >> self.bit_depth != 0 {
            return Err(Error::format(format!(
                "shift {} out of range for {} bits",
                self.shift, self.bit_depth
            )));
        }
        if self.no_modulo && self.shift != 0 {
            return Err(Error::format("raw-value streams carry no shift"));
        }
        self.contexts
            .validate()
            .map_err(|e| Error::format(e.to_string()))?;
        match self.mode {
            ModelMode::Adaptive => {
                if !self.static_params.is_empty() {
                    return Err(Error::format("adaptive stream carries static parameters"));
                }
            }
            ModelMode::Static => {
                if self.static_params.len() != self.levels + 1 {
                    return Err(Error::format("static parameters do not cover every stream"));
                }
                for p in &self.static_params {
                    if p.sets.is_empty() || p.sets.len() > usize::from(u16::MAX) {
                        return Err(Error::format("bad parameter set count"));
                    }
                    if p.map.len() != self.contexts.bucket_count()
                        || p.map.iter().any(|&m| usize::from(m) >= p.sets.len())
                    {
                        return Err(Error::format("bad bucket map"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Shapes of the coded streams: `F_1..F_L`, then the coarsest.
    pub fn stream_shapes(&self) -> Result<Vec<Shape>> {
        let shapes = level_shapes(self.shape, self.levels)?;
        let mut out: Vec<Shape> = shapes[1..].to_vec();
        out.push(shapes[self.levels]);
        Ok(out)
    }

    pub fn write(&self, out: &mut Vec<u8>) -> Result<()> {
        self.validate()?;
        let s = self.shape;
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        let too_big = || Error::format(format!("{s} does not fit the stream header"));
        out.extend_from_slice(
            &u32::try_from(s.height)
                .map_err(|_| too_big())?
                .to_be_bytes(),
        );
        out.extend_from_slice(&u32::try_from(s.width).map_err(|_| too_big())?.to_be_bytes());
        out.push(u8::try_from(s.channels).map_err(|_| too_big())?);
        out.push(self.bit_depth);
        out.push(u8::try_from(self.levels).map_err(|_| too_big())?);
        out.extend_from_slice(&self.shift.to_be_bytes());
        out.extend_from_slice(&self.n_squeeze);
        out.push(self.mode.to_byte());
        out.push(if self.no_modulo { FLAG_NO_MODULO } else { 0 });
        out.push(self.contexts.coarse_bins);
        out.push(self.contexts.neighbor_bins);
        if self.mode == ModelMode::Static {
            out.push(self.mixtures);
            for p in &self.static_params {
                out.extend_from_slice(&(p.sets.len() as u16).to_be_bytes());
                for set in &p.sets {
                    out.extend_from_slice(&set.to_bytes());
                }
                for &m in &p.map {
                    out.extend_from_slice(&m.to_be_bytes());
                }
            }
        }
        Ok(())
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::integrity("stream truncated"))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

impl CodedStream {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.payloads.len() != self.header.levels + 1 {
            return Err(Error::format(
                "payload count does not match the level count",
            ));
        }
        let mut out = Vec::new();
        self.header.write(&mut out)?;
        for p in &self.payloads {
            out.extend_from_slice(&(p.len() as u64).to_be_bytes());
        }
        for p in &self.payloads {
            out.extend_from_slice(p);
        }
        out.extend_from_slice(&self.crc32.to_be_bytes());
        Ok(out)
    }

    /// Parses a stream. Bad magic, version or field values are format
    /// errors; data ending early is an integrity error.
    pub fn from_bytes(data: &[u8]) -> Result<CodedStream> {
        if data.len() < 5 {
            return Err(Error::format("too short for a PPYC stream"));
        }
        if &data[..4] != MAGIC {
            return Err(Error::format("bad stream magic (expected PPYC)"));
        }
        if data[4] != VERSION {
            return Err(Error::format(format!(
                "unsupported stream version {} (this build reads version {VERSION})",
                data[4]
            )));
        }
        let mut r = Reader { data, pos: 5 };
        let height = r.u32()? as usize;
        let width = r.u32()? as usize;
        let channels = usize::from(r.u8()?);
        let bit_depth = r.u8()?;
        let levels = usize::from(r.u8()?);
        let shift = r.u16()?;
        let n_squeeze = r.take(levels)?.to_vec();
        let mode = match r.u8()? {
            0 => ModelMode::Adaptive,
            1 => ModelMode::Static,
            m => return Err(Error::format(format!("unknown model mode {m}"))),
        };
        let flags = r.u8()?;
        if flags & !FLAG_NO_MODULO != 0 {
            return Err(Error::format(format!("unknown flags {flags:#04x}")));
        }
        let contexts = ContextSpec {
            coarse_bins: r.u8()?,
            neighbor_bins: r.u8()?,
        };
        contexts
            .validate()
            .map_err(|e| Error::format(e.to_string()))?;
        check_bit_depth(bit_depth).map_err(|e| Error::format(e.to_string()))?;
        let mut mixtures = 0;
        let mut static_params = Vec::new();
        if mode == ModelMode::Static {
            mixtures = r.u8()?;
            for _ in 0..=levels {
                let n_sets = usize::from(r.u16()?);
                let mut sets = Vec::with_capacity(n_sets);
                for _ in 0..n_sets {
                    let rest = &data[r.pos..];
                    let (p, used) = match LogisticMixtureParams::from_bytes(rest, bit_depth) {
                        Ok(v) => v,
                        Err(_)
                            if rest.len()
                                < 1 + 24 * usize::from(rest.first().copied().unwrap_or(0)) =>
                        {
                            return Err(Error::integrity("stream truncated"))
                        }
                        Err(e) => return Err(e),
                    };
                    r.pos += used;
                    sets.push(p);
                }
                let mut map = Vec::with_capacity(contexts.bucket_count());
                for _ in 0..contexts.bucket_count() {
                    map.push(r.u16()?);
                }
                static_params.push(StaticStreamParams { sets, map });
            }
        }
        let header = StreamHeader {
            shape: Shape::new(height, width, channels),
            bit_depth,
            levels,
            shift,
            n_squeeze,
            mode,
            no_modulo: flags & FLAG_NO_MODULO != 0,
            contexts,
            mixtures,
            static_params,
        };
        header.validate()?;
        let mut lens = Vec::with_capacity(levels + 1);
        for _ in 0..=levels {
            lens.push(r.u64()?);
        }
        let mut payloads = Vec::with_capacity(levels + 1);
        for len in lens {
            let len = usize::try_from(len).map_err(|_| Error::integrity("stream truncated"))?;
            payloads.push(r.take(len)?.to_vec());
        }
        let crc32 = r.u32()?;
        if r.pos != data.len() {
            return Err(Error::format(format!(
                "{} trailing bytes after the stream",
                data.len() - r.pos
            )));
        }
        Ok(CodedStream {
            header,
            payloads,
            crc32,
        })
    }
}
