//! Integer probability models feeding the range coder.
//!
//! Every model hands the coder cumulative frequencies out of
//! [`PROB_TOTAL`]. Each symbol of a `K`-letter alphabet is guaranteed at
//! least one count, so no symbol is ever uncodable.
//!
//! Adaptive contexts mix four sources: the context's own frequency table,
//! a table shared by the contexts with the same neighbour feature, a table
//! shared by all contexts of the stream, and the uniform distribution. Mixing weights follow the Bayesian posterior of each
//! source (multiplied by the probability it gave each coded symbol) with
//! a small floor so a source can recover after a bad stretch.

use crate::error::{Error, Result};
use crate::mixture::LogisticMixtureParams;

use super::range_coder::{RangeDecoder, RangeEncoder, MAX_TOTAL};

/// Frequency total of every coded distribution.
pub const PROB_TOTAL: u32 = MAX_TOTAL;
/// Count added to a symbol each time it is seen.
pub const INCREMENT: u32 = 32;
/// Tables are halved once their total exceeds this.
pub const RESCALE_LIMIT: u32 = 1 << 16;

const WEIGHT_ONE: u64 = 1 << 16;
const WEIGHT_MIN: u64 = 64;

/// Adaptive symbol counts with logarithmic-time prefix sums.
#[derive(Debug, Clone)]
pub struct FreqTable {
    freq: Vec<u32>,
    tree: Vec<u32>,
    total: u32,
}

impl FreqTable {
    /// Table over `k` symbols, every count starting at 1.
    pub fn new(k: usize) -> Self {
        let mut t = FreqTable {
            freq: vec![1; k],
            tree: vec![0; k + 1],
            total: k as u32,
        };
        t.rebuild();
        t
    }

    fn rebuild(&mut self) {
        let k = self.freq.len();
        self.tree[0] = 0;
        self.tree[1..].copy_from_slice(&self.freq);
        for i in 1..=k {
            let j = i + (i & i.wrapping_neg());
            if j <= k {
                self.tree[j] += self.tree[i];
            }
        }
        self.total = self.freq.iter().sum();
    }

    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn freq(&self, s: usize) -> u32 {
        self.freq[s]
    }

    /// Sum of the counts of symbols `< s`.
    #[inline]
    pub fn cum(&self, s: usize) -> u32 {
        let mut i = s;
        let mut sum = 0;
        while i > 0 {
            sum += self.tree[i];
            i &= i - 1;
        }
        sum
    }

    pub fn update(&mut self, s: usize) {
        self.freq[s] += INCREMENT;
        self.total += INCREMENT;
        if self.total > RESCALE_LIMIT {
            for f in &mut self.freq {
                *f = (*f / 2).max(1);
            }
            self.rebuild();
        } else {
            let mut i = s + 1;
            while i < self.tree.len() {
                self.tree[i] += INCREMENT;
                i += i & i.wrapping_neg();
            }
        }
    }
}

/// Posterior weights of `N` mixed sources.
#[derive(Debug, Clone)]
struct MixWeights<const N: usize>([u64; N]);

impl<const N: usize> MixWeights<N> {
    fn new() -> Self {
        MixWeights([WEIGHT_ONE / N as u64; N])
    }

    /// `w_k · 2^64 / (W · T_k)`: multiplying a source cumulative by this
    /// gives its weighted share in 64-bit fixed point.
    fn factors(&self, totals: [u32; N]) -> [u128; N] {
        let w_sum: u128 = self.0.iter().map(|&w| u128::from(w)).sum();
        let mut f = [0u128; N];
        for k in 0..N {
            f[k] = (u128::from(self.0[k]) << 64) / (w_sum * u128::from(totals[k]));
        }
        f
    }

    fn update(&mut self, freqs: [u32; N], totals: [u32; N]) {
        let mut post = [0u128; N];
        for k in 0..N {
            post[k] =
                (u128::from(self.0[k]) * (u128::from(freqs[k]) << 32)) / u128::from(totals[k]);
        }
        let sum: u128 = post.iter().sum();
        for k in 0..N {
            self.0[k] = ((post[k] * u128::from(WEIGHT_ONE) / sum) as u64).max(WEIGHT_MIN);
        }
    }
}

/// Mixed cumulative frequency of symbol `s` out of a `k`-letter alphabet.
#[inline]
fn mixed_cum<const N: usize>(factors: &[u128; N], cums: [u32; N], s: usize, k: usize) -> u32 {
    if s >= k {
        return PROB_TOTAL;
    }
    let budget = u128::from(PROB_TOTAL) - k as u128;
    let acc: u128 = (0..N).map(|i| u128::from(cums[i]) * factors[i]).sum();
    s as u32 + ((acc * budget) >> 64) as u32
}

/// A context's own table mixed with two shared tables and the uniform
/// distribution.
#[derive(Debug, Clone)]
struct AdaptiveContext {
    table: FreqTable,
    weights: MixWeights<4>,
}

/// A table mixed with the uniform distribution.
#[derive(Debug, Clone)]
struct UniformMixed {
    table: FreqTable,
    weights: MixWeights<2>,
}

impl UniformMixed {
    fn new(k: usize) -> Self {
        UniformMixed {
            table: FreqTable::new(k),
            weights: MixWeights::new(),
        }
    }

    fn cums(&self, s: usize) -> [u32; 2] {
        [self.table.cum(s), s as u32]
    }

    fn totals(&self) -> [u32; 2] {
        [self.table.total(), self.table.len() as u32]
    }

    fn interval(&self, s: usize) -> (u32, u32) {
        let k = self.table.len();
        let f = self.weights.factors(self.totals());
        let lo = mixed_cum(&f, self.cums(s), s, k);
        let hi = mixed_cum(&f, self.cums(s + 1), s + 1, k);
        (lo, hi - lo)
    }

    fn find(&self, target: u32) -> usize {
        let k = self.table.len();
        let f = self.weights.factors(self.totals());
        let (mut lo, mut hi) = (0, k);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if mixed_cum(&f, self.cums(mid), mid, k) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    fn update(&mut self, s: usize) {
        let totals = self.totals();
        self.weights.update([self.table.freq(s), 1], totals);
        self.table.update(s);
    }
}

/// Quantized cumulative table of a logistic mixture:
/// `cum(s) = s + floor(F(s - 1) · (PROB_TOTAL - K))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticTable {
    cum: Vec<u32>,
}

impl StaticTable {
    /// Table over the top `hi_bits` bits of the mixture's support.
    pub fn from_params(params: &LogisticMixtureParams, hi_bits: u8) -> Self {
        let b = params.bit_depth();
        let k = 1usize << hi_bits;
        let bin = 1u32 << (b - hi_bits);
        let budget = f64::from(PROB_TOTAL - k as u32);
        let mut cum = Vec::with_capacity(k + 1);
        cum.push(0);
        let mut floor_part = 0u32;
        for s in 1..k {
            let f = params.cdf_upper(s as u32 * bin - 1);
            let q = ((f * budget).floor().max(0.0) as u32).min(PROB_TOTAL - k as u32);
            // keep the table monotone whatever the float rounding did
            floor_part = floor_part.max(q);
            cum.push(s as u32 + floor_part);
        }
        cum.push(PROB_TOTAL);
        StaticTable { cum }
    }

    fn interval(&self, s: usize) -> (u32, u32) {
        (self.cum[s], self.cum[s + 1] - self.cum[s])
    }

    fn find(&self, target: u32) -> usize {
        self.cum.partition_point(|&c| c <= target) - 1
    }

    pub fn cumulative(&self) -> &[u32] {
        &self.cum
    }
}

enum Main {
    Adaptive {
        contexts: Vec<Option<AdaptiveContext>>,
        shared: FreqTable,
        // tables shared by buckets with the same neighbour bin
        by_neighbor: Vec<Option<FreqTable>>,
    },
    Static {
        tables: Vec<StaticTable>,
        map: Vec<u16>,
    },
}

/// Probability model of one coded stream: `bucket_count` contexts over
/// `b`-bit symbols. Symbols wider than 8 bits are split into a high byte,
/// coded under the context, and the remaining low bits, coded under a
/// per-high-byte adaptive table.
pub struct StreamModel {
    hi_bits: u8,
    lo_bits: u8,
    main: Main,
    lo: Vec<Option<UniformMixed>>,
    ideal_bits: f64,
}

/// Static-mode parameters of one stream: parameter sets and the set index
/// used by each context bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticStreamParams {
    pub sets: Vec<LogisticMixtureParams>,
    pub map: Vec<u16>,
}

impl StreamModel {
    fn split(bit_depth: u8) -> (u8, u8) {
        let hi = bit_depth.min(8);
        (hi, bit_depth - hi)
    }

    /// Buckets are laid out as `coarse_bin · neighbor_bins + neighbor_bin`;
    /// besides its own table, each bucket mixes in one shared by every
    /// bucket of its neighbour bin.
    pub fn adaptive(bit_depth: u8, bucket_count: usize, neighbor_bins: usize) -> Self {
        let (hi_bits, lo_bits) = Self::split(bit_depth);
        StreamModel {
            hi_bits,
            lo_bits,
            main: Main::Adaptive {
                contexts: vec![None; bucket_count],
                shared: FreqTable::new(1 << hi_bits),
                by_neighbor: vec![None; neighbor_bins.clamp(1, bucket_count.max(1))],
            },
            lo: Self::lo_tables(hi_bits, lo_bits),
            ideal_bits: 0.0,
        }
    }

    pub fn fixed(bit_depth: u8, params: &StaticStreamParams) -> Result<Self> {
        let (hi_bits, lo_bits) = Self::split(bit_depth);
        if params.sets.is_empty() {
            return Err(Error::Model("static stream without parameter sets".into()));
        }
        if let Some(&bad) = params
            .map
            .iter()
            .find(|&&m| usize::from(m) >= params.sets.len())
        {
            return Err(Error::Model(format!(
                "bucket refers to parameter set {bad} of {}",
                params.sets.len()
            )));
        }
        if params.sets.iter().any(|p| p.bit_depth() != bit_depth) {
            return Err(Error::Model("parameter set bit depth mismatch".into()));
        }
        Ok(StreamModel {
            hi_bits,
            lo_bits,
            main: Main::Static {
                tables: params
                    .sets
                    .iter()
                    .map(|p| StaticTable::from_params(p, hi_bits))
                    .collect(),
                map: params.map.clone(),
            },
            lo: Self::lo_tables(hi_bits, lo_bits),
            ideal_bits: 0.0,
        })
    }

    fn lo_tables(hi_bits: u8, lo_bits: u8) -> Vec<Option<UniformMixed>> {
        if lo_bits == 0 {
            Vec::new()
        } else {
            vec![None; 1 << hi_bits]
        }
    }

    /// Sum of `-log2(freq / PROB_TOTAL)` over every coded symbol so far.
    pub fn ideal_bits(&self) -> f64 {
        self.ideal_bits
    }

    fn account(&mut self, freq: u32) {
        self.ideal_bits += f64::from(PROB_TOTAL).log2() - f64::from(freq).log2();
    }

    fn main_interval(&mut self, bucket: usize, s: usize) -> (u32, u32) {
        match &mut self.main {
            Main::Static { tables, map } => tables[usize::from(map[bucket])].interval(s),
            Main::Adaptive {
                contexts,
                shared,
                by_neighbor,
            } => {
                let k = shared.len();
                let ctx = contexts[bucket].get_or_insert_with(|| AdaptiveContext {
                    table: FreqTable::new(k),
                    weights: MixWeights::new(),
                });
                let gi = bucket % by_neighbor.len();
                let g = by_neighbor[gi].get_or_insert_with(|| FreqTable::new(k));
                let totals = [ctx.table.total(), g.total(), shared.total(), k as u32];
                let f = ctx.weights.factors(totals);
                let c = |s: usize| [ctx.table.cum(s), g.cum(s), shared.cum(s), s as u32];
                let lo = mixed_cum(&f, c(s), s, k);
                let hi = mixed_cum(&f, c(s + 1), s + 1, k);
                (lo, hi - lo)
            }
        }
    }

    fn main_find(&mut self, bucket: usize, target: u32) -> usize {
        match &mut self.main {
            Main::Static { tables, map } => tables[usize::from(map[bucket])].find(target),
            Main::Adaptive {
                contexts,
                shared,
                by_neighbor,
            } => {
                let k = shared.len();
                let ctx = contexts[bucket].get_or_insert_with(|| AdaptiveContext {
                    table: FreqTable::new(k),
                    weights: MixWeights::new(),
                });
                let gi = bucket % by_neighbor.len();
                let g = by_neighbor[gi].get_or_insert_with(|| FreqTable::new(k));
                let totals = [ctx.table.total(), g.total(), shared.total(), k as u32];
                let f = ctx.weights.factors(totals);
                let (mut lo, mut hi) = (0, k);
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    let c = [ctx.table.cum(mid), g.cum(mid), shared.cum(mid), mid as u32];
                    if mixed_cum(&f, c, mid, k) <= target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            }
        }
    }

    fn main_update(&mut self, bucket: usize, s: usize) {
        if let Main::Adaptive {
            contexts,
            shared,
            by_neighbor,
        } = &mut self.main
        {
            let k = shared.len() as u32;
            let ctx = contexts[bucket]
                .as_mut()
                .expect("context touched before update");
            let gi = bucket % by_neighbor.len();
            let g = by_neighbor[gi].as_mut().expect("touched before update");
            let totals = [ctx.table.total(), g.total(), shared.total(), k];
            ctx.weights
                .update([ctx.table.freq(s), g.freq(s), shared.freq(s), 1], totals);
            ctx.table.update(s);
            g.update(s);
            shared.update(s);
        }
    }

    fn lo_model(&mut self, hi: usize) -> &mut UniformMixed {
        let k = 1usize << self.lo_bits;
        self.lo[hi].get_or_insert_with(|| UniformMixed::new(k))
    }

    pub fn encode(&mut self, enc: &mut RangeEncoder, bucket: usize, symbol: u32) -> Result<()> {
        let hi = (symbol >> self.lo_bits) as usize;
        if hi >> self.hi_bits != 0 {
            return Err(Error::Model(format!(
                "symbol {symbol} outside the alphabet"
            )));
        }
        let (cum, freq) = self.main_interval(bucket, hi);
        enc.encode(cum, freq, PROB_TOTAL)?;
        self.account(freq);
        self.main_update(bucket, hi);
        if self.lo_bits > 0 {
            let lo = (symbol & ((1 << self.lo_bits) - 1)) as usize;
            let m = self.lo_model(hi);
            let (cum, freq) = m.interval(lo);
            m.update(lo);
            enc.encode(cum, freq, PROB_TOTAL)?;
            self.account(freq);
        }
        Ok(())
    }

    pub fn decode(&mut self, dec: &mut RangeDecoder, bucket: usize) -> Result<u32> {
        let t = dec.target(PROB_TOTAL)?;
        let hi = self.main_find(bucket, t);
        let (cum, freq) = self.main_interval(bucket, hi);
        dec.consume(cum, freq, PROB_TOTAL)?;
        self.main_update(bucket, hi);
        let mut symbol = (hi as u32) << self.lo_bits;
        if self.lo_bits > 0 {
            let t = dec.target(PROB_TOTAL)?;
            let m = self.lo_model(hi);
            let lo = m.find(t);
            let (cum, freq) = m.interval(lo);
            m.update(lo);
            dec.consume(cum, freq, PROB_TOTAL)?;
            symbol |= lo as u32;
        }
        Ok(symbol)
    }
}
