//! Isolation forest: points that random axis-aligned cuts separate from
//! the rest in few steps are anomalous.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub trees: usize,
    /// Points drawn (without replacement) to grow each tree.
    pub subsample: usize,
    /// Fraction of points flagged; the top `ceil(contamination · n)` scores.
    pub contamination: f64,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 100,
            subsample: 256,
            contamination: 0.002,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.contamination > 0.0 && self.contamination < 0.5) {
            return Err(Error::domain(format!(
                "contamination {} outside (0, 0.5)",
                self.contamination
            )));
        }
        if self.trees == 0 || self.subsample < 2 {
            return Err(Error::domain("need at least one tree and a subsample of 2"));
        }
        Ok(())
    }
}

/// Average path length of an unsuccessful search in a binary search tree
/// of `n` keys.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Split {
        feature: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn grow(points: &[Vec<f64>], idx: &mut [usize], limit: usize, rng: &mut ChaCha8Rng) -> Tree {
        let mut t = Tree { nodes: Vec::new() };
        t.build(points, idx, 0, limit, rng);
        t
    }

    fn build(
        &mut self,
        points: &[Vec<f64>],
        idx: &mut [usize],
        depth: usize,
        limit: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: idx.len() });
        if idx.len() <= 1 || depth >= limit {
            return id;
        }
        let dims = points[idx[0]].len();
        // only features that still vary can split
        let ranges: Vec<(usize, f64, f64)> = (0..dims)
            .filter_map(|f| {
                let (lo, hi) = idx
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                        (lo.min(points[i][f]), hi.max(points[i][f]))
                    });
                (hi > lo).then_some((f, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return id;
        }
        let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
        let value = rng.random_range(lo..hi);
        let mut mid = 0;
        for k in 0..idx.len() {
            if points[idx[k]][feature] < value {
                idx.swap(k, mid);
                mid += 1;
            }
        }
        // value > lo, so both sides are non-empty
        let (l, r) = idx.split_at_mut(mid);
        let left = self.build(points, l, depth + 1, limit, rng);
        let right = self.build(points, r, depth + 1, limit, rng);
        self.nodes[id] = Node::Split {
            feature,
            value,
            left,
            right,
        };
        id
    }

    fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                Node::Leaf { size } => return depth + average_path_length(size),
                Node::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    node = if x[feature] < value { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

/// Anomaly scores `2^(-E[h(x)] / c(ψ))` in `(0, 1]`; higher is more
/// anomalous.
pub fn anomaly_scores(points: &[Vec<f64>], config: &ForestConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if points.is_empty() {
        return Err(Error::domain("isolation forest needs at least one point"));
    }
    let dims = points[0].len();
    if dims == 0 || points.iter().any(|p| p.len() != dims) {
        return Err(Error::domain("points need one common, non-zero dimension"));
    }
    let psi = config.subsample.min(points.len());
    let limit = (psi as f64).log2().ceil() as usize;
    let trees: Vec<Tree> = (0..config.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(t as u64);
            let mut idx = rand::seq::index::sample(&mut rng, points.len(), psi).into_vec();
            Tree::grow(points, &mut idx, limit, &mut rng)
        })
        .collect();
    let norm = average_path_length(psi).max(f64::MIN_POSITIVE);
    Ok(points
        .par_iter()
        .map(|x| {
            let mean = trees.iter().map(|t| t.path_length(x)).sum::<f64>() / trees.len() as f64;
            2f64.powf(-mean / norm)
        })
        .collect())
}

/// Indices of the `ceil(contamination · n)` highest scores; equal scores
/// go to the lower index.
pub fn top_fraction(scores: &[f64], contamination: f64) -> Vec<usize> {
    let k = ((contamination * scores.len() as f64).ceil() as usize).min(scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Flags for the top-scoring fraction of `points`.
pub fn isolation_forest(points: &[Vec<f64>], config: &ForestConfig) -> Result<Vec<bool>> {
    let scores = anomaly_scores(points, config)?;
    let mut mask = vec![false; points.len()];
    for i in top_fraction(&scores, config.contamination) {
        mask[i] = true;
    }
    Ok(mask)
}
