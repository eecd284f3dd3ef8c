//! Context buckets: which adaptive table (or fitted distribution) codes a
//! sample.
//!
//! A bucket combines two quantized features. The first is the co-located
//! coarse sample, the retained member of the pair whose difference is
//! being coded. The second summarizes up to four already-coded neighbours
//! of the same channel. For difference streams it is the octave of their
//! mean magnitude (local activity, which predicts the spread of the next
//! difference far better than its sign does); for raw-value streams it is
//! their mean value binned uniformly. One extra neighbour bin means "no
//! neighbour available".

use arrayvec::ArrayVec;

use crate::error::{Error, Result};
use crate::scan::ScanPlan;

/// Candidate neighbour offsets, nearest first.
pub const NEIGHBOR_OFFSETS: [(isize, isize); 12] = [
    (-1, 0),
    (0, -1),
    (0, 1),
    (1, 0),
    (-1, -1),
    (-1, 1),
    (1, -1),
    (1, 1),
    (-2, 0),
    (0, -2),
    (0, 2),
    (2, 0),
];
/// At most this many neighbours feed a context.
pub const MAX_NEIGHBORS: usize = 4;

/// Quantization of the two context features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextSpec {
    pub coarse_bins: u8,
    /// Includes the trailing "no neighbour" bin.
    pub neighbor_bins: u8,
}

impl Default for ContextSpec {
    fn default() -> Self {
        ContextSpec {
            coarse_bins: 16,
            neighbor_bins: 16,
        }
    }
}

/// How neighbour samples are summarized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborKind {
    /// Symbols are modulo differences stored with an offset of `shift`.
    Residual { shift: u32 },
    /// Symbols are plain sample values.
    Raw,
}

impl ContextSpec {
    pub fn validate(&self) -> Result<()> {
        if self.coarse_bins == 0 || self.neighbor_bins < 2 {
            return Err(Error::domain(format!(
                "context needs at least 1 coarse bin and 2 neighbour bins, got {} and {}",
                self.coarse_bins, self.neighbor_bins
            )));
        }
        Ok(())
    }

    pub fn bucket_count(&self) -> usize {
        usize::from(self.coarse_bins) * usize::from(self.neighbor_bins)
    }

    pub fn coarse_bin(&self, value: u32, bit_depth: u8) -> usize {
        ((u64::from(value) * u64::from(self.coarse_bins)) >> bit_depth) as usize
    }

    fn none_bin(&self) -> usize {
        usize::from(self.neighbor_bins) - 1
    }

    /// Neighbour feature bin; `neighbors` empty gives the "none" bin.
    pub fn neighbor_bin(&self, kind: NeighborKind, bit_depth: u8, neighbors: &[u32]) -> usize {
        if neighbors.is_empty() {
            return self.none_bin();
        }
        let real = self.none_bin() as u64;
        let n = neighbors.len() as i64;
        match kind {
            NeighborKind::Raw => {
                let mean = neighbors.iter().map(|&v| u64::from(v)).sum::<u64>() / n as u64;
                ((mean * real) >> bit_depth) as usize
            }
            NeighborKind::Residual { shift } => {
                let k = 1i64 << bit_depth;
                let half = k / 2;
                let abs: i64 = neighbors
                    .iter()
                    .map(|&v| ((i64::from(v) - i64::from(shift) + half).rem_euclid(k) - half).abs())
                    .sum();
                // twice the mean magnitude, rounded
                let mut a = (2 * abs + n / 2) / n;
                if bit_depth > 8 {
                    a >>= bit_depth - 8;
                }
                let class = u64::from(64 - (a as u64).leading_zeros());
                class.min(real - 1) as usize
            }
        }
    }

    /// Bucket id `coarse_bin · neighbor_bins + neighbor_bin`.
    pub fn bucket(
        &self,
        kind: NeighborKind,
        bit_depth: u8,
        coarse_value: u32,
        neighbors: &[u32],
    ) -> usize {
        self.coarse_bin(coarse_value, bit_depth) * usize::from(self.neighbor_bins)
            + self.neighbor_bin(kind, bit_depth, neighbors)
    }
}

/// Causal access rules of a scan plan: only samples from groups already
/// coded may be read.
pub struct CausalView<'a> {
    plan: &'a ScanPlan,
    groups: Vec<u32>,
    channels: usize,
}

impl<'a> CausalView<'a> {
    pub fn new(plan: &'a ScanPlan, channels: usize) -> Self {
        CausalView {
            plan,
            groups: plan.group_map(),
            channels,
        }
    }

    #[inline]
    fn group(&self, r: usize, c: usize) -> u32 {
        self.groups[r * self.plan.width() + c]
    }

    /// Sample of `referenced` in the row-major `symbols` grid, or a
    /// causality error unless it is in an earlier group than `current`.
    #[inline]
    pub fn get(
        &self,
        symbols: &[u16],
        current: (usize, usize),
        referenced: (usize, usize),
        ch: usize,
    ) -> Result<u16> {
        let (h, w) = (self.plan.height(), self.plan.width());
        if referenced.0 >= h || referenced.1 >= w {
            return Err(Error::Causality(format!(
                "{referenced:?} is outside the {h}x{w} grid"
            )));
        }
        if self.group(referenced.0, referenced.1) >= self.group(current.0, current.1) {
            return Err(Error::Causality(format!(
                "{current:?} cannot see {referenced:?}: not decoded yet"
            )));
        }
        Ok(symbols[(referenced.0 * w + referenced.1) * self.channels + ch])
    }

    /// Positions of up to [`MAX_NEIGHBORS`] earlier-group neighbours of
    /// `(r, c)`, nearest first.
    pub fn neighbors(&self, r: usize, c: usize) -> ArrayVec<(usize, usize), MAX_NEIGHBORS> {
        let mut out = ArrayVec::new();
        let (h, w) = (self.plan.height() as isize, self.plan.width() as isize);
        let g = self.group(r, c);
        for (dr, dc) in NEIGHBOR_OFFSETS {
            let (rr, cc) = (r as isize + dr, c as isize + dc);
            if rr < 0 || cc < 0 || rr >= h || cc >= w {
                continue;
            }
            let (rr, cc) = (rr as usize, cc as usize);
            if self.group(rr, cc) < g {
                out.push((rr, cc));
                if out.is_full() {
                    break;
                }
            }
        }
        out
    }
}
