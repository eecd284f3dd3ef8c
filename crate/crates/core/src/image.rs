//! Integer image grids.

use std::fmt;

use crate::error::{Error, Result};

/// Largest supported sample bit depth.
pub const MAX_BIT_DEPTH: u8 = 16;

/// Subsampling direction of one pyramid step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    /// Pairs of adjacent rows; halves the height.
    Rows,
    /// Pairs of adjacent columns; halves the width.
    Cols,
}

impl Axis {
    /// Axis used at 1-based pyramid level `index`: odd levels pair rows,
    /// even levels pair columns.
    pub fn for_level(index: usize) -> Axis {
        if index % 2 == 1 {
            Axis::Rows
        } else {
            Axis::Cols
        }
    }

    pub fn other(self) -> Axis {
        match self {
            Axis::Rows => Axis::Cols,
            Axis::Cols => Axis::Rows,
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Axis::Rows => 0,
            Axis::Cols => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Axis> {
        match b {
            0 => Some(Axis::Rows),
            1 => Some(Axis::Cols),
            _ => None,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Rows => f.write_str("rows"),
            Axis::Cols => f.write_str("cols"),
        }
    }
}

/// Grid extents of an image: `height × width × channels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Shape {
            height,
            width,
            channels,
        }
    }

    /// Number of spatial positions.
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Number of samples (pixels × channels).
    pub fn samples(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn extent(&self, axis: Axis) -> usize {
        match axis {
            Axis::Rows => self.height,
            Axis::Cols => self.width,
        }
    }

    /// Shape after halving along `axis`; `None` if that extent is odd.
    pub fn halved(&self, axis: Axis) -> Option<Shape> {
        let e = self.extent(axis);
        if !e.is_multiple_of(2) {
            return None;
        }
        Some(match axis {
            Axis::Rows => Shape::new(e / 2, self.width, self.channels),
            Axis::Cols => Shape::new(self.height, e / 2, self.channels),
        })
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// A `height × width × channels` grid of unsigned samples at bit depth
/// `b`, stored row-major with channels innermost.
///
/// Every sample is guaranteed to lie in `[0, 2^b - 1]`.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    shape: Shape,
    bit_depth: u8,
    samples: Vec<u16>,
}

impl fmt::Debug for Image {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Image")
            .field("shape", &self.shape)
            .field("bit_depth", &self.bit_depth)
            .finish_non_exhaustive()
    }
}

pub(crate) fn check_bit_depth(bit_depth: u8) -> Result<()> {
    if bit_depth == 0 || bit_depth > MAX_BIT_DEPTH {
        return Err(Error::domain(format!(
            "bit depth {bit_depth} outside [1, {MAX_BIT_DEPTH}]"
        )));
    }
    Ok(())
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        bit_depth: u8,
        samples: Vec<u16>,
    ) -> Result<Image> {
        check_bit_depth(bit_depth)?;
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::shape(format!(
                "image extents must be positive, got {height}x{width}x{channels}"
            )));
        }
        let shape = Shape::new(height, width, channels);
        if samples.len() != shape.samples() {
            return Err(Error::shape(format!(
                "{} samples supplied for a {shape} image",
                samples.len()
            )));
        }
        let max = ((1u32 << bit_depth) - 1) as u16;
        if let Some(pos) = samples.iter().position(|&s| s > max) {
            return Err(Error::domain(format!(
                "sample {} at index {pos} exceeds {max} for bit depth {bit_depth}",
                samples[pos]
            )));
        }
        Ok(Image {
            shape,
            bit_depth,
            samples,
        })
    }

    pub fn from_shape(shape: Shape, bit_depth: u8, samples: Vec<u16>) -> Result<Image> {
        Image::new(
            shape.width,
            shape.height,
            shape.channels,
            bit_depth,
            samples,
        )
    }

    /// All-zero image.
    pub fn zeros(shape: Shape, bit_depth: u8) -> Result<Image> {
        Image::from_shape(shape, bit_depth, vec![0; shape.samples()])
    }

    /// Internal constructor for producers that already guarantee the
    /// range and length invariants.
    pub(crate) fn from_parts_unchecked(shape: Shape, bit_depth: u8, samples: Vec<u16>) -> Image {
        debug_assert_eq!(samples.len(), shape.samples());
        debug_assert!(samples.iter().all(|&s| u32::from(s) < (1u32 << bit_depth)));
        Image {
            shape,
            bit_depth,
            samples,
        }
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    /// Largest representable sample, `2^b - 1`.
    pub fn max_value(&self) -> u32 {
        (1u32 << self.bit_depth) - 1
    }

    pub fn samples(&self) -> &[u16] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u16> {
        self.samples
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.shape.width + col) * self.shape.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> u16 {
        self.samples[self.index(row, col, channel)]
    }

    /// Writes one sample, rejecting values outside the bit-depth range.
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: u16) -> Result<()> {
        if u32::from(value) > self.max_value() {
            return Err(Error::domain(format!(
                "sample {value} exceeds {} for bit depth {}",
                self.max_value(),
                self.bit_depth
            )));
        }
        let i = self.index(row, col, channel);
        self.samples[i] = value;
        Ok(())
    }

    /// One row as a contiguous slice of `width × channels` samples.
    pub fn row(&self, row: usize) -> &[u16] {
        let stride = self.shape.width * self.shape.channels;
        &self.samples[row * stride..(row + 1) * stride]
    }

    /// Samples serialized big-endian at `ceil(b/8)` bytes each, the same
    /// layout as a binary PNM raster.
    pub fn raw_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.samples.len() * 2);
        if self.bit_depth <= 8 {
            out.extend(self.samples.iter().map(|&s| s as u8));
        } else {
            for &s in &self.samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        }
        out
    }

    /// Inverse of [`Image::raw_bytes`].
    pub fn from_raw_bytes(shape: Shape, bit_depth: u8, bytes: &[u8]) -> Result<Image> {
        check_bit_depth(bit_depth)?;
        let per = bytes_per_sample(bit_depth);
        if bytes.len() != shape.samples() * per {
            return Err(Error::format(format!(
                "expected {} raster bytes for {shape} at {bit_depth} bits, found {}",
                shape.samples() * per,
                bytes.len()
            )));
        }
        let samples = if per == 1 {
            bytes.iter().map(|&b| u16::from(b)).collect()
        } else {
            bytes
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        };
        Image::from_shape(shape, bit_depth, samples)
    }
}

/// Bytes used per sample in raw rasters.
pub fn bytes_per_sample(bit_depth: u8) -> usize {
    if bit_depth <= 8 {
        1
    } else {
        2
    }
}
