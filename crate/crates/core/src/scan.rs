//! Squeeze rearrangement, coding-group orders, and critical-path counts.
//!
//! A scan plan partitions a grid into ordered groups. Groups are coded one
//! after another, each conditioned on everything in earlier groups; pixels
//! inside a group only see earlier groups. With `n` squeezes the grid
//! splits into `4^n` subsampled images, one group each.

use std::fmt;

use crate::error::{Error, Result};
use crate::image::{Image, Shape};

/// One application of the squeeze: `H × W × C` to `H/2 × W/2 × 4C`.
/// Output channel `4·c + q` holds input channel `c` at block position `q`
/// (0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right).
fn squeeze_once(img: &Image) -> Result<Image> {
    let s = img.shape();
    if !s.height.is_multiple_of(2) || !s.width.is_multiple_of(2) {
        return Err(Error::shape(format!(
            "cannot squeeze a {s} grid: odd extent"
        )));
    }
    let out_shape = Shape::new(s.height / 2, s.width / 2, s.channels * 4);
    let mut out = vec![0u16; out_shape.samples()];
    let mut i = 0;
    for r in 0..out_shape.height {
        for c in 0..out_shape.width {
            for ch in 0..s.channels {
                for q in 0..4 {
                    out[i] = img.get(2 * r + q / 2, 2 * c + q % 2, ch);
                    i += 1;
                }
            }
        }
    }
    Ok(Image::from_parts_unchecked(out_shape, img.bit_depth(), out))
}

fn unsqueeze_once(img: &Image) -> Result<Image> {
    let s = img.shape();
    if !s.channels.is_multiple_of(4) {
        return Err(Error::shape(format!(
            "cannot unsqueeze a {s} grid: channel count not a multiple of 4"
        )));
    }
    let out_shape = Shape::new(s.height * 2, s.width * 2, s.channels / 4);
    let mut out = vec![0u16; out_shape.samples()];
    let mut i = 0;
    for r in 0..s.height {
        for c in 0..s.width {
            for ch in 0..out_shape.channels {
                for q in 0..4 {
                    let (rr, cc) = (2 * r + q / 2, 2 * c + q % 2);
                    out[(rr * out_shape.width + cc) * out_shape.channels + ch] = img.samples()[i];
                    i += 1;
                }
            }
        }
    }
    Ok(Image::from_parts_unchecked(out_shape, img.bit_depth(), out))
}

/// Applies the squeeze `n` times.
pub fn squeeze(img: &Image, n: u32) -> Result<Image> {
    let s = img.shape();
    let unit = 1usize.checked_shl(n).unwrap_or(0);
    if unit == 0 || !s.height.is_multiple_of(unit) || !s.width.is_multiple_of(unit) {
        return Err(Error::shape(format!(
            "cannot squeeze a {s} grid {n} times: extents must be divisible by 2^{n}"
        )));
    }
    let mut cur = img.clone();
    for _ in 0..n {
        cur = squeeze_once(&cur)?;
    }
    Ok(cur)
}

/// Exact inverse of [`squeeze`].
pub fn unsqueeze(img: &Image, n: u32) -> Result<Image> {
    let factor = 1usize.checked_shl(2 * n).unwrap_or(0);
    if factor == 0 || !img.channels().is_multiple_of(factor) {
        return Err(Error::shape(format!(
            "cannot unsqueeze {} channels {n} times",
            img.channels()
        )));
    }
    let mut cur = img.clone();
    for _ in 0..n {
        cur = unsqueeze_once(&cur)?;
    }
    Ok(cur)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Squeeze(u32),
    Raster,
}

/// Ordered partition of a `height × width` grid into coding groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanPlan {
    height: usize,
    width: usize,
    layout: Layout,
}

/// Plan whose groups are the `4^n` subsampled images produced by `n`
/// squeezes, ordered by sub-image index (first squeeze most significant).
pub fn make_scan_plan(height: usize, width: usize, n_squeeze: u32) -> Result<ScanPlan> {
    let unit = 1usize.checked_shl(n_squeeze).unwrap_or(0);
    if height == 0 || width == 0 {
        return Err(Error::shape(format!("empty {height}x{width} grid")));
    }
    if unit == 0 || !height.is_multiple_of(unit) || !width.is_multiple_of(unit) {
        return Err(Error::shape(format!(
            "a {height}x{width} grid does not admit {n_squeeze} squeezes"
        )));
    }
    Ok(ScanPlan {
        height,
        width,
        layout: Layout::Squeeze(n_squeeze),
    })
}

/// Fully sequential row-major plan: one singleton group per pixel.
pub fn raster_plan(height: usize, width: usize) -> ScanPlan {
    ScanPlan {
        height,
        width,
        layout: Layout::Raster,
    }
}

/// Largest `n ≤ requested` such that both extents are divisible by `2^n`.
pub fn feasible_squeezes(height: usize, width: usize, requested: u32) -> u32 {
    let tz = (height | width).trailing_zeros();
    requested.min(tz)
}

impl ScanPlan {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Squeeze count for squeeze plans, `None` for raster plans.
    pub fn n_squeeze(&self) -> Option<u32> {
        match self.layout {
            Layout::Squeeze(n) => Some(n),
            Layout::Raster => None,
        }
    }

    pub fn group_count(&self) -> usize {
        match self.layout {
            Layout::Squeeze(n) => 1 << (2 * n),
            Layout::Raster => self.height * self.width,
        }
    }

    /// Pixels per group.
    pub fn group_size(&self) -> usize {
        self.height * self.width / self.group_count()
    }

    /// Index of the group containing `(row, col)`.
    #[inline]
    pub fn group_of(&self, row: usize, col: usize) -> usize {
        match self.layout {
            Layout::Raster => row * self.width + col,
            Layout::Squeeze(n) => {
                let mut s = 0;
                for k in 0..n {
                    let q = 2 * ((row >> k) & 1) + ((col >> k) & 1);
                    s = s * 4 + q;
                }
                s
            }
        }
    }

    /// Pixels of group `s` in row-major order.
    pub fn group(&self, s: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        assert!(s < self.group_count(), "group {s} out of range");
        let (r0, c0, step) = match self.layout {
            Layout::Raster => (s / self.width, s % self.width, usize::MAX),
            Layout::Squeeze(n) => {
                let (mut r0, mut c0) = (0, 0);
                for k in 0..n {
                    // digit k (most significant first) is the k-th squeeze
                    let q = (s >> (2 * (n - 1 - k))) & 3;
                    r0 |= (q >> 1) << k;
                    c0 |= (q & 1) << k;
                }
                (r0, c0, 1usize << n)
            }
        };
        let rows = if step == usize::MAX {
            1
        } else {
            self.height / step
        };
        let cols = if step == usize::MAX {
            1
        } else {
            self.width / step
        };
        let step = if step == usize::MAX { 1 } else { step };
        (0..rows).flat_map(move |i| (0..cols).map(move |j| (r0 + i * step, c0 + j * step)))
    }

    /// All groups materialized in order.
    pub fn groups(&self) -> Vec<Vec<(usize, usize)>> {
        (0..self.group_count())
            .map(|s| self.group(s).collect())
            .collect()
    }

    /// Row-major table of group indices.
    pub fn group_map(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.height * self.width);
        for r in 0..self.height {
            for c in 0..self.width {
                out.push(self.group_of(r, c) as u32);
            }
        }
        out
    }

    /// Errors unless `referenced` lies in a strictly earlier group than
    /// `current`, i.e. is already known when `current` is coded.
    pub fn check_causal(&self, current: (usize, usize), referenced: (usize, usize)) -> Result<()> {
        let cur = self.group_of(current.0, current.1);
        let refd = self.group_of(referenced.0, referenced.1);
        if refd >= cur {
            return Err(Error::Causality(format!(
                "pixel {current:?} in group {cur} references {referenced:?} in group {refd}"
            )));
        }
        Ok(())
    }
}

/// Sequential step counts of coarse-to-fine generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriticalPathReport {
    /// Number of halvings between the original and the coarsest grid.
    pub levels: usize,
    /// Steps for levels `1..L-1` (in that order) followed by the coarsest
    /// grid's raster steps.
    pub per_level_steps: Vec<u64>,
    pub total_steps: u64,
}

impl fmt::Display for CriticalPathReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "L = {}", self.levels)?;
        let n = self.per_level_steps.len();
        for (i, t) in self.per_level_steps.iter().enumerate() {
            if i + 1 == n {
                writeln!(f, "T_coarsest = {t}")?;
            } else {
                writeln!(f, "T_{} = {t}", i + 1)?;
            }
        }
        write!(f, "T = {}", self.total_steps)
    }
}

fn log2_exact(v: u64, what: &str) -> Result<u32> {
    if v == 0 || !v.is_power_of_two() {
        return Err(Error::domain(format!("{what} {v} is not a power of two")));
    }
    Ok(v.trailing_zeros())
}

/// Critical path for an `n0 × n0` image generated from a
/// `coarsest × coarsest` raster-coded grid.
///
/// `L = 2·log2(n0 / coarsest)` and `T = coarsest² + Σ_{i=1}^{L-1} 4^{n_i}`.
/// `n_squeeze` is either a single value used everywhere or one value per
/// level `1..L-1` (extra entries are ignored).
pub fn critical_path(n0: u64, coarsest: u64, n_squeeze: &[u32]) -> Result<CriticalPathReport> {
    let a = log2_exact(n0, "original extent")?;
    let b = log2_exact(coarsest, "coarsest extent")?;
    if b > a {
        return Err(Error::domain(format!(
            "coarsest extent {coarsest} exceeds original extent {n0}"
        )));
    }
    let levels = 2 * (a - b) as usize;
    let fine = levels.saturating_sub(1);
    if n_squeeze.is_empty() || (n_squeeze.len() != 1 && n_squeeze.len() < fine) {
        return Err(Error::domain(format!(
            "need one n_squeeze value or at least {fine}, got {}",
            n_squeeze.len()
        )));
    }
    let mut per_level_steps = Vec::with_capacity(fine + 1);
    for i in 0..fine {
        let n = if n_squeeze.len() == 1 {
            n_squeeze[0]
        } else {
            n_squeeze[i]
        };
        let steps = 1u64
            .checked_shl(2 * n)
            .filter(|_| n < 32)
            .ok_or_else(|| Error::domain(format!("n_squeeze {n} too large")))?;
        per_level_steps.push(steps);
    }
    per_level_steps.push(coarsest * coarsest);
    let total_steps = per_level_steps
        .iter()
        .try_fold(0u64, |acc, &t| acc.checked_add(t))
        .ok_or_else(|| Error::domain("step count overflows u64"))?;
    Ok(CriticalPathReport {
        levels,
        per_level_steps,
        total_steps,
    })
}
