//! Uncompressed on-disk pyramid container.
//!
//! Layout, all integers big-endian:
//!
//! ```text
//! "PPYR"  version:u8  height:u32  width:u32  channels:u8  bit_depth:u8  L:u8
//! L × { axis:u8 (0 rows, 1 cols)  fine samples }
//! coarsest samples
//! ```
//!
//! Samples take `ceil(b/8)` bytes each, row-major, channels innermost.

use crate::error::{Error, Result};
use crate::image::{bytes_per_sample, check_bit_depth, Axis, Image, Shape};
use crate::pyramid::{level_shapes, PairedPyramid, PyramidLevel};

pub const MAGIC: &[u8; 4] = b"PPYR";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4 + 1 + 1 + 1;

pub fn encode_container(pyr: &PairedPyramid) -> Result<Vec<u8>> {
    let s = pyr.original_shape;
    let (h, w) = (u32::try_from(s.height), u32::try_from(s.width));
    let (Ok(h), Ok(w), Ok(c), Ok(l)) = (
        h,
        w,
        u8::try_from(s.channels),
        u8::try_from(pyr.levels.len()),
    ) else {
        return Err(Error::format(format!(
            "{s} with {} levels does not fit the container header",
            pyr.levels.len()
        )));
    };
    let mut out = Vec::with_capacity(HEADER_LEN + pyr.total_samples() * 2 + pyr.levels.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&h.to_be_bytes());
    out.extend_from_slice(&w.to_be_bytes());
    out.push(c);
    out.push(pyr.bit_depth);
    out.push(l);
    for level in &pyr.levels {
        out.push(level.axis.to_byte());
        out.extend_from_slice(&level.fine.raw_bytes());
    }
    out.extend_from_slice(&pyr.coarsest.raw_bytes());
    Ok(out)
}

pub fn decode_container(data: &[u8]) -> Result<PairedPyramid> {
    if data.len() < HEADER_LEN {
        return Err(Error::format("container truncated inside the header"));
    }
    if &data[..4] != MAGIC {
        return Err(Error::format("bad container magic (expected PPYR)"));
    }
    if data[4] != VERSION {
        return Err(Error::format(format!(
            "unsupported container version {} (this build reads version {VERSION})",
            data[4]
        )));
    }
    let be32 = |i: usize| u32::from_be_bytes(data[i..i + 4].try_into().expect("4 bytes")) as usize;
    let shape = Shape::new(be32(5), be32(9), usize::from(data[13]));
    let bit_depth = data[14];
    let levels = usize::from(data[15]);
    check_bit_depth(bit_depth).map_err(|e| Error::format(e.to_string()))?;
    if shape.samples() == 0 {
        return Err(Error::format(format!("container shape {shape} is empty")));
    }
    let shapes = level_shapes(shape, levels).map_err(|e| Error::format(e.to_string()))?;
    let per = bytes_per_sample(bit_depth);
    let mut pos = HEADER_LEN;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= data.len())
            .ok_or_else(|| Error::format("container truncated"))?;
        let slice = &data[pos..end];
        pos = end;
        Ok(slice)
    };
    let mut out = Vec::with_capacity(levels);
    for index in 1..=levels {
        let axis_byte = take(1)?[0];
        let axis = Axis::from_byte(axis_byte)
            .ok_or_else(|| Error::format(format!("level {index}: bad axis byte {axis_byte}")))?;
        if axis != Axis::for_level(index) {
            return Err(Error::format(format!(
                "level {index}: axis {axis} breaks the alternating order"
            )));
        }
        let fine_shape = shapes[index];
        let raw = take(fine_shape.samples() * per)?;
        let fine = Image::from_raw_bytes(fine_shape, bit_depth, raw)
            .map_err(|e| Error::format(format!("level {index}: {e}")))?;
        out.push(PyramidLevel {
            index,
            axis,
            fine,
            coarse_shape: fine_shape,
        });
    }
    let raw = take(shapes[levels].samples() * per)?;
    let coarsest = Image::from_raw_bytes(shapes[levels], bit_depth, raw)
        .map_err(|e| Error::format(format!("coarsest: {e}")))?;
    if pos != data.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after the container",
            data.len() - pos
        )));
    }
    Ok(PairedPyramid {
        levels: out,
        coarsest,
        original_shape: shape,
        bit_depth,
    })
}
