//! Discretized logistic mixtures over the sample alphabet `{0, ..., 2^b - 1}`.
//!
//! The mass of value `x` under component `k` is the logistic CDF
//! difference `σ((x + ½ − μ_k)/ω_k) − σ((x − ½ − μ_k)/ω_k)`, with the two
//! edge bins absorbing the tails so the distribution normalizes exactly.
//! Fitting maximizes the likelihood of a histogram by gradient ascent in
//! an unconstrained parameterization (softmax logits, raw means, log
//! scales).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detmath::sigmoid;
use crate::error::{Error, Result};
use crate::image::{check_bit_depth, Image};
use crate::stats::Histogram;

/// Smallest admissible component scale, in sample units.
pub const SCALE_FLOOR: f64 = 1e-3;
/// Probabilities below this are clamped inside log-likelihood sums.
pub const PROB_FLOOR: f64 = 1e-12;
const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Mass, and its derivatives w.r.t. mean and log-scale, of one logistic
/// component on bin `x` of a `support`-sized alphabet.
#[derive(Debug, Clone, Copy)]
struct BinTerms {
    mass: f64,
    d_mean: f64,
    d_log_scale: f64,
}

#[inline]
fn sigmoid_slope(z: f64) -> f64 {
    sigmoid(z) * sigmoid(-z)
}

#[inline]
fn component_mass(x: u32, support: u32, mean: f64, scale: f64) -> f64 {
    let xf = f64::from(x);
    let upper = (xf + 0.5 - mean) / scale;
    let lower = (xf - 0.5 - mean) / scale;
    let first = x == 0;
    let last = x + 1 == support;
    match (first, last) {
        (true, true) => 1.0,
        (true, false) => sigmoid(upper),
        (false, true) => sigmoid(-lower),
        (false, false) => {
            if lower >= 0.0 {
                sigmoid(-lower) - sigmoid(-upper)
            } else {
                sigmoid(upper) - sigmoid(lower)
            }
        }
    }
}

fn component_terms(x: u32, support: u32, mean: f64, scale: f64) -> BinTerms {
    let xf = f64::from(x);
    let upper = (xf + 0.5 - mean) / scale;
    let lower = (xf - 0.5 - mean) / scale;
    let (su, sl) = (
        if x + 1 == support {
            0.0
        } else {
            sigmoid_slope(upper)
        },
        if x == 0 { 0.0 } else { sigmoid_slope(lower) },
    );
    let (zu, zl) = (
        if x + 1 == support { 0.0 } else { upper },
        if x == 0 { 0.0 } else { lower },
    );
    BinTerms {
        mass: component_mass(x, support, mean, scale),
        d_mean: -(su - sl) / scale,
        d_log_scale: -(su * zu - sl * zl),
    }
}

/// Parameters of a discretized logistic mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticMixtureParams {
    weights: Vec<f64>,
    means: Vec<f64>,
    scales: Vec<f64>,
    bit_depth: u8,
}

/// Log-likelihood of a histogram under a mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Likelihood {
    /// Total log-likelihood in nats.
    pub nats: f64,
    /// Negative log2-likelihood per sample.
    pub bits_per_sample: f64,
}

/// Gradient of the total log-likelihood in the unconstrained
/// parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub logits: Vec<f64>,
    pub means: Vec<f64>,
    pub log_scales: Vec<f64>,
}

impl LogisticMixtureParams {
    /// Validates and builds a parameter set. Scales below [`SCALE_FLOOR`]
    /// are raised to it.
    pub fn new(
        weights: Vec<f64>,
        means: Vec<f64>,
        scales: Vec<f64>,
        bit_depth: u8,
    ) -> Result<Self> {
        check_bit_depth(bit_depth)?;
        let m = weights.len();
        if m == 0 || m > u8::MAX as usize || means.len() != m || scales.len() != m {
            return Err(Error::domain(format!(
                "mixture needs 1..=255 components with matching lengths, got {}/{}/{}",
                weights.len(),
                means.len(),
                scales.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::domain(
                "mixture weights must be finite and non-negative",
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::domain(format!(
                "mixture weights sum to {sum}, not 1"
            )));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("mixture means must be finite"));
        }
        if scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::domain("mixture scales must be finite and positive"));
        }
        let scales = scales.into_iter().map(|s| s.max(SCALE_FLOOR)).collect();
        Ok(LogisticMixtureParams {
            weights,
            means,
            scales,
            bit_depth,
        })
    }

    /// Single-component distribution.
    pub fn single(mean: f64, scale: f64, bit_depth: u8) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![scale], bit_depth)
    }

    /// Builds from unconstrained coordinates; logits go through a softmax.
    pub fn from_unconstrained(
        logits: &[f64],
        means: &[f64],
        log_scales: &[f64],
        bit_depth: u8,
    ) -> Result<Self> {
        let weights = softmax(logits);
        let scales = log_scales.iter().map(|s| s.exp()).collect();
        Self::new(weights, means.to_vec(), scales, bit_depth)
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    /// Alphabet size `2^b`.
    pub fn support(&self) -> u32 {
        1u32 << self.bit_depth
    }

    fn check_value(&self, x: u32) -> Result<()> {
        if x >= self.support() {
            return Err(Error::domain(format!(
                "value {x} outside the {}-bit support",
                self.bit_depth
            )));
        }
        Ok(())
    }

    /// Probability of value `x`.
    pub fn pmf(&self, x: u32) -> Result<f64> {
        self.check_value(x)?;
        Ok(self.pmf_unchecked(x))
    }

    #[inline]
    pub(crate) fn pmf_unchecked(&self, x: u32) -> f64 {
        let k = self.support();
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.scales)
            .map(|((w, m), s)| w * component_mass(x, k, *m, *s))
            .sum()
    }

    /// Probabilities of every value of the support.
    pub fn pmf_all(&self) -> Vec<f64> {
        (0..self.support()).map(|x| self.pmf_unchecked(x)).collect()
    }

    /// Cumulative probability of all values `<= x`, i.e. the mixture CDF at
    /// the upper edge of bin `x` (exactly 1 for the last bin).
    pub fn cdf_upper(&self, x: u32) -> f64 {
        if x + 1 >= self.support() {
            return 1.0;
        }
        let edge = f64::from(x) + 0.5;
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.scales)
            .map(|((w, m), s)| w * sigmoid((edge - m) / s))
            .sum::<f64>()
            .min(1.0)
    }

    fn check_histogram(&self, hist: &Histogram) -> Result<()> {
        if hist.bit_depth() != self.bit_depth {
            return Err(Error::domain(format!(
                "{}-bit histogram against {}-bit mixture",
                hist.bit_depth(),
                self.bit_depth
            )));
        }
        if hist.total() == 0 {
            return Err(Error::domain("likelihood of an empty histogram"));
        }
        Ok(())
    }

    /// `Σ_x count[x] · ln pmf(x)` with the log clamped at `ln 1e-12`.
    pub fn log_likelihood(&self, hist: &Histogram) -> Result<Likelihood> {
        self.check_histogram(hist)?;
        let nats: f64 = hist
            .nonzero()
            .map(|(x, c)| c as f64 * self.pmf_unchecked(x).max(PROB_FLOOR).ln())
            .sum();
        Ok(Likelihood {
            nats,
            bits_per_sample: -nats / std::f64::consts::LN_2 / hist.total() as f64,
        })
    }

    /// Log-likelihood together with its analytic gradient w.r.t.
    /// `(softmax logits, means, log scales)`.
    pub fn log_likelihood_gradient(&self, hist: &Histogram) -> Result<(Likelihood, Gradient)> {
        self.check_histogram(hist)?;
        let m = self.components();
        let k = self.support();
        let mut grad = Gradient {
            logits: vec![0.0; m],
            means: vec![0.0; m],
            log_scales: vec![0.0; m],
        };
        let mut nats = 0.0;
        let mut terms = vec![
            BinTerms {
                mass: 0.0,
                d_mean: 0.0,
                d_log_scale: 0.0
            };
            m
        ];
        for (x, count) in hist.nonzero() {
            let c = count as f64;
            let mut p = 0.0;
            for j in 0..m {
                terms[j] = component_terms(x, k, self.means[j], self.scales[j]);
                p += self.weights[j] * terms[j].mass;
            }
            if p < PROB_FLOOR {
                nats += c * PROB_FLOOR.ln();
                continue;
            }
            nats += c * p.ln();
            for j in 0..m {
                let w = self.weights[j];
                grad.logits[j] += c * w * (terms[j].mass / p - 1.0);
                grad.means[j] += c * w * terms[j].d_mean / p;
                grad.log_scales[j] += c * w * terms[j].d_log_scale / p;
            }
        }
        Ok((
            Likelihood {
                nats,
                bits_per_sample: -nats / std::f64::consts::LN_2 / hist.total() as f64,
            },
            grad,
        ))
    }

    /// Entropy of the distribution in bits.
    pub fn entropy_bits(&self) -> f64 {
        self.pmf_all()
            .into_iter()
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.log2())
            .sum()
    }

    /// Draws one value: a component by weight, a continuous logistic
    /// variate from it, rounded and clamped to the support.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut comp = self.components() - 1;
        for (j, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                comp = j;
                break;
            }
        }
        // open interval (0, 1)
        let v: f64 = loop {
            let v: f64 = rng.random();
            if v > 0.0 {
                break v;
            }
        };
        let x = self.means[comp] + self.scales[comp] * (v / (1.0 - v)).ln();
        let max = f64::from(self.support() - 1);
        x.round().clamp(0.0, max) as u32
    }

    /// Flat big-endian record: `M` as u8, then `M` weights, `M` means and
    /// `M` scales as f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = self.components();
        let mut out = Vec::with_capacity(1 + 24 * m);
        out.push(m as u8);
        for v in self.weights.iter().chain(&self.means).chain(&self.scales) {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out
    }

    /// Parses [`Self::to_bytes`]; returns the parameters and bytes consumed.
    pub fn from_bytes(bytes: &[u8], bit_depth: u8) -> Result<(Self, usize)> {
        let m = *bytes
            .first()
            .ok_or_else(|| Error::format("missing mixture component count"))?
            as usize;
        let need = 1 + 24 * m;
        if bytes.len() < need {
            return Err(Error::format("truncated mixture record"));
        }
        let vals: Vec<f64> = bytes[1..need]
            .chunks_exact(8)
            .map(|c| f64::from_be_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let params = Self::new(
            vals[..m].to_vec(),
            vals[m..2 * m].to_vec(),
            vals[2 * m..].to_vec(),
            bit_depth,
        )
        .map_err(|e| Error::format(format!("invalid mixture record: {e}")))?;
        Ok((params, need))
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = e.iter().sum();
    let mut w: Vec<f64> = e.iter().map(|v| v / s).collect();
    // push the rounding residue into the largest weight so the sum is 1
    let resid = 1.0 - w.iter().sum::<f64>();
    let imax = w
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    w[imax] += resid;
    w
}

/// Settings for [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub max_iters: usize,
    /// Initial step size for logits and log scales.
    pub learning_rate: f64,
    /// Per-iteration multiplicative step decay.
    pub lr_decay: f64,
    /// Independent starts; the first is the deterministic quantile start.
    pub restarts: usize,
    pub seed: u64,
    /// Stop once the per-sample objective improves by less than this over
    /// a 25-iteration window.
    pub tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iters: 500,
            learning_rate: 0.05,
            lr_decay: 0.995,
            restarts: 10,
            seed: 0,
            tolerance: 1e-9,
        }
    }
}

/// Outcome of [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: LogisticMixtureParams,
    pub bits_per_sample: f64,
    /// Bits per sample of the deterministic quantile initializer.
    pub init_bits_per_sample: f64,
    /// False when the best start hit `max_iters` without meeting the
    /// tolerance.
    pub converged: bool,
    pub iterations: usize,
}

/// Histogram quantile: smallest value whose cumulative count reaches
/// `q · total`.
fn quantile(hist: &Histogram, q: f64) -> f64 {
    let target = q * hist.total() as f64;
    let mut acc = 0.0;
    for (v, &c) in hist.counts().iter().enumerate() {
        acc += c as f64;
        if acc >= target && c > 0 {
            return v as f64;
        }
    }
    (hist.counts().len() - 1) as f64
}

struct Unconstrained {
    logits: Vec<f64>,
    means: Vec<f64>,
    log_scales: Vec<f64>,
}

impl Unconstrained {
    fn to_params(&self, bit_depth: u8) -> LogisticMixtureParams {
        LogisticMixtureParams::from_unconstrained(
            &self.logits,
            &self.means,
            &self.log_scales,
            bit_depth,
        )
        .expect("unconstrained coordinates always map to valid parameters")
    }
}

fn quantile_start(hist: &Histogram, m: usize) -> Unconstrained {
    let support = f64::from(1u32 << hist.bit_depth());
    Unconstrained {
        logits: vec![0.0; m],
        means: (0..m)
            .map(|j| quantile(hist, (j as f64 + 0.5) / m as f64))
            .collect(),
        log_scales: vec![(support / (4.0 * m as f64)).max(SCALE_FLOOR).ln(); m],
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Ascent direction for gradient `g`, scaled per coordinate by `lr`.
    fn step(&mut self, g: &[f64], lr: &[f64]) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        g.iter()
            .enumerate()
            .map(|(i, &gi)| {
                self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * gi;
                self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * gi * gi;
                lr[i] * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS)
            })
            .collect()
    }
}

fn optimize(
    hist: &Histogram,
    start: Unconstrained,
    config: &FitConfig,
) -> (LogisticMixtureParams, f64, bool, usize) {
    let b = hist.bit_depth();
    let m = start.logits.len();
    let n = hist.total() as f64;
    let mean_scale = (f64::from(1u32 << b) / (4.0 * m as f64)).max(1.0);
    let mut cur = start;
    let mut adam = Adam::new(3 * m);
    let mut best_params = cur.to_params(b);
    let mut best_bits = best_params
        .log_likelihood(hist)
        .expect("histogram validated")
        .bits_per_sample;
    let mut history: Vec<f64> = Vec::with_capacity(config.max_iters);
    let floor_log = SCALE_FLOOR.ln();
    let mut lr = config.learning_rate;
    for iter in 0..config.max_iters {
        let params = cur.to_params(b);
        let (ll, grad) = params
            .log_likelihood_gradient(hist)
            .expect("histogram validated");
        if ll.bits_per_sample < best_bits {
            best_bits = ll.bits_per_sample;
            best_params = params;
        }
        history.push(ll.bits_per_sample);
        const WINDOW: usize = 25;
        if history.len() > WINDOW {
            let old = history[history.len() - 1 - WINDOW];
            if old - ll.bits_per_sample < config.tolerance {
                return (best_params, best_bits, true, iter + 1);
            }
        }
        let g: Vec<f64> = grad
            .logits
            .iter()
            .chain(&grad.means)
            .chain(&grad.log_scales)
            .map(|v| v / n)
            .collect();
        let mut rates = vec![lr; 3 * m];
        for r in &mut rates[m..2 * m] {
            *r = lr * mean_scale;
        }
        let step = adam.step(&g, &rates);
        for j in 0..m {
            cur.logits[j] += step[j];
            cur.means[j] += step[m + j];
            cur.log_scales[j] = (cur.log_scales[j] + step[2 * m + j]).max(floor_log);
        }
        lr *= config.lr_decay;
    }
    let params = cur.to_params(b);
    let bits = params
        .log_likelihood(hist)
        .expect("histogram validated")
        .bits_per_sample;
    if bits < best_bits {
        (params, bits, false, config.max_iters)
    } else {
        (best_params, best_bits, false, config.max_iters)
    }
}

/// Maximum-likelihood fit of an `m`-component mixture to `hist`.
///
/// Never returns parameters worse than the quantile initializer.
pub fn fit(hist: &Histogram, m: usize, config: &FitConfig) -> Result<FitResult> {
    if hist.total() == 0 {
        return Err(Error::domain("cannot fit an empty histogram"));
    }
    if m == 0 || m > u8::MAX as usize {
        return Err(Error::domain(format!(
            "component count {m} outside 1..=255"
        )));
    }
    let b = hist.bit_depth();
    let support = f64::from(1u32 << b);
    let init = quantile_start(hist, m);
    let init_bits = init.to_params(b).log_likelihood(hist)?.bits_per_sample;

    let mut best: Option<FitResult> = None;
    for restart in 0..config.restarts.max(1) {
        let start = if restart == 0 {
            quantile_start(hist, m)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(
                config.seed ^ (restart as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            );
            let base = quantile_start(hist, m);
            let spread = support / (2.0 * m as f64);
            Unconstrained {
                logits: (0..m).map(|_| rng.random_range(-0.5..0.5)).collect(),
                means: base
                    .means
                    .iter()
                    .map(|mu| (mu + rng.random_range(-spread..spread)).clamp(0.0, support - 1.0))
                    .collect(),
                log_scales: base
                    .log_scales
                    .iter()
                    .map(|s| s + rng.random_range(-0.5..0.5))
                    .collect(),
            }
        };
        let (params, bits, converged, iterations) = optimize(hist, start, config);
        let better = best.as_ref().is_none_or(|b| bits < b.bits_per_sample);
        if better {
            best = Some(FitResult {
                params,
                bits_per_sample: bits,
                init_bits_per_sample: init_bits,
                converged,
                iterations,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Adds `amount` to every sample modulo `2^b`.
pub fn cyclic_shift(img: &Image, amount: i64) -> Image {
    let k = 1i64 << img.bit_depth();
    let a = amount.rem_euclid(k) as u32;
    let mask = (k - 1) as u32;
    let samples = img
        .samples()
        .iter()
        .map(|&s| ((u32::from(s) + a) & mask) as u16)
        .collect();
    Image::from_parts_unchecked(img.shape(), img.bit_depth(), samples)
}

/// Default cyclic shift for fine components: half the alphabet.
pub fn default_shift(bit_depth: u8) -> u32 {
    1u32 << (bit_depth - 1)
}

/// Three-channel mixture whose green and blue means shift linearly with the
/// already-known red (and green) values of the same pixel.
///
/// All channels share one latent component: `p(r, g, b) = Σ_k π_k
/// q(r; μ_rk) q(g; μ_gk + α_k r̃) q(b; μ_bk + β_k r̃ + γ_k g̃)` where `x̃` is
/// the sample minus the support midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledMixture {
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 3]>,
    pub scales: Vec<[f64; 3]>,
    /// `(α, β, γ)` per component.
    pub coupling: Vec<[f64; 3]>,
    pub bit_depth: u8,
}

/// Gradient of [`CoupledMixture::log_likelihood_gradient`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledGradient {
    pub logits: Vec<f64>,
    pub means: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    pub coupling: Vec<[f64; 3]>,
}

impl CoupledMixture {
    fn center(&self) -> f64 {
        f64::from(1u32 << (self.bit_depth - 1))
    }

    fn channel_means(&self, k: usize, px: [u32; 3]) -> [f64; 3] {
        let c = self.center();
        let r = f64::from(px[0]) - c;
        let g = f64::from(px[1]) - c;
        let [a, b, gm] = self.coupling[k];
        let mu = self.means[k];
        [mu[0], mu[1] + a * r, mu[2] + b * r + gm * g]
    }

    pub fn support(&self) -> u32 {
        1u32 << self.bit_depth
    }

    /// Joint probability of one RGB triple.
    pub fn pmf(&self, px: [u32; 3]) -> f64 {
        let k = self.support();
        (0..self.weights.len())
            .map(|j| {
                let mu = self.channel_means(j, px);
                self.weights[j]
                    * (0..3)
                        .map(|ch| component_mass(px[ch], k, mu[ch], self.scales[j][ch]))
                        .product::<f64>()
            })
            .sum()
    }

    /// Probability of channel `ch` taking value `x` given the earlier
    /// channels in `prev` (length `ch`).
    pub fn conditional_pmf(&self, ch: usize, x: u32, prev: &[u32]) -> f64 {
        let k = self.support();
        let mut px = [0u32; 3];
        px[..ch].copy_from_slice(&prev[..ch]);
        px[ch] = x;
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..self.weights.len() {
            let mu = self.channel_means(j, px);
            let prior: f64 = self.weights[j]
                * (0..ch)
                    .map(|c| component_mass(px[c], k, mu[c], self.scales[j][c]))
                    .product::<f64>();
            den += prior;
            num += prior * component_mass(x, k, mu[ch], self.scales[j][ch]);
        }
        if den <= 0.0 {
            return 0.0;
        }
        num / den
    }

    /// Total log-likelihood (nats) of weighted triples and its gradient.
    pub fn log_likelihood_gradient(&self, data: &[([u32; 3], u64)]) -> (f64, CoupledGradient) {
        let m = self.weights.len();
        let k = self.support();
        let c0 = self.center();
        let mut g = CoupledGradient {
            logits: vec![0.0; m],
            means: vec![[0.0; 3]; m],
            log_scales: vec![[0.0; 3]; m],
            coupling: vec![[0.0; 3]; m],
        };
        let mut nats = 0.0;
        let mut comp = vec![
            (
                0.0f64,
                [BinTerms {
                    mass: 0.0,
                    d_mean: 0.0,
                    d_log_scale: 0.0
                }; 3]
            );
            m
        ];
        for &(px, count) in data {
            let c = count as f64;
            let mut p = 0.0;
            for j in 0..m {
                let mu = self.channel_means(j, px);
                let t = [0, 1, 2].map(|ch| component_terms(px[ch], k, mu[ch], self.scales[j][ch]));
                let joint = t[0].mass * t[1].mass * t[2].mass;
                comp[j] = (joint, t);
                p += self.weights[j] * joint;
            }
            if p < PROB_FLOOR {
                nats += c * PROB_FLOOR.ln();
                continue;
            }
            nats += c * p.ln();
            let r = f64::from(px[0]) - c0;
            let gv = f64::from(px[1]) - c0;
            for j in 0..m {
                let (joint, t) = comp[j];
                let w = self.weights[j];
                g.logits[j] += c * w * (joint / p - 1.0);
                for ch in 0..3 {
                    let others: f64 = (0..3).filter(|&o| o != ch).map(|o| t[o].mass).product();
                    let dm = c * w * t[ch].d_mean * others / p;
                    g.means[j][ch] += dm;
                    g.log_scales[j][ch] += c * w * t[ch].d_log_scale * others / p;
                    match ch {
                        1 => g.coupling[j][0] += dm * r,
                        2 => {
                            g.coupling[j][1] += dm * r;
                            g.coupling[j][2] += dm * gv;
                        }
                        _ => {}
                    }
                }
            }
        }
        (nats, g)
    }

    /// Maximum-likelihood fit to weighted RGB triples, starting from
    /// independent per-channel quantile starts and zero coupling. Returns
    /// the model and its cost in bits per triple.
    pub fn fit(
        data: &[([u32; 3], u64)],
        m: usize,
        bit_depth: u8,
        config: &FitConfig,
    ) -> Result<(CoupledMixture, f64)> {
        check_bit_depth(bit_depth)?;
        let total: u64 = data.iter().map(|d| d.1).sum();
        if total == 0 {
            return Err(Error::domain("cannot fit an empty sample set"));
        }
        if m == 0 || m > u8::MAX as usize {
            return Err(Error::domain(format!(
                "component count {m} outside 1..=255"
            )));
        }
        let mut hists = [0, 1, 2].map(|_| Histogram::new(bit_depth).expect("valid depth"));
        for &(px, c) in data {
            for ch in 0..3 {
                if px[ch] >> bit_depth != 0 {
                    return Err(Error::domain(format!(
                        "sample {} outside the {bit_depth}-bit support",
                        px[ch]
                    )));
                }
                hists[ch].add(px[ch], c);
            }
        }
        let starts = hists.map(|h| quantile_start(&h, m));
        let mut logits = vec![0.0; m];
        let mut means: Vec<[f64; 3]> = (0..m)
            .map(|j| [starts[0].means[j], starts[1].means[j], starts[2].means[j]])
            .collect();
        let mut log_scales: Vec<[f64; 3]> = (0..m)
            .map(|j| {
                [
                    starts[0].log_scales[j],
                    starts[1].log_scales[j],
                    starts[2].log_scales[j],
                ]
            })
            .collect();
        let mut coupling = vec![[0.0; 3]; m];
        let build =
            |logits: &[f64], means: &[[f64; 3]], ls: &[[f64; 3]], cp: &[[f64; 3]]| CoupledMixture {
                weights: softmax(logits),
                means: means.to_vec(),
                scales: ls
                    .iter()
                    .map(|s| s.map(|v| v.exp().max(SCALE_FLOOR)))
                    .collect(),
                coupling: cp.to_vec(),
                bit_depth,
            };
        let n = total as f64;
        let mean_scale = (f64::from(1u32 << bit_depth) / (4.0 * m as f64)).max(1.0);
        let mut adam = Adam::new(10 * m);
        let mut lr = config.learning_rate;
        let mut best = build(&logits, &means, &log_scales, &coupling);
        let mut best_nats = best.log_likelihood_gradient(data).0;
        let floor_log = SCALE_FLOOR.ln();
        for _ in 0..config.max_iters {
            let model = build(&logits, &means, &log_scales, &coupling);
            let (nats, g) = model.log_likelihood_gradient(data);
            if nats > best_nats {
                best_nats = nats;
                best = model;
            }
            let mut flat = g.logits.clone();
            let mut rates = vec![lr; m];
            for j in 0..m {
                flat.extend_from_slice(&g.means[j]);
                rates.extend_from_slice(&[lr * mean_scale; 3]);
                flat.extend_from_slice(&g.log_scales[j]);
                rates.extend_from_slice(&[lr; 3]);
            }
            for j in 0..m {
                flat.extend_from_slice(&g.coupling[j]);
                rates.extend_from_slice(&[lr; 3]);
            }
            for v in &mut flat {
                *v /= n;
            }
            let step = adam.step(&flat, &rates);
            for j in 0..m {
                logits[j] += step[j];
                let base = m + 6 * j;
                for ch in 0..3 {
                    means[j][ch] += step[base + ch];
                    log_scales[j][ch] = (log_scales[j][ch] + step[base + 3 + ch]).max(floor_log);
                }
                for t in 0..3 {
                    coupling[j][t] += step[7 * m + 3 * j + t];
                }
            }
            lr *= config.lr_decay;
        }
        let last = build(&logits, &means, &log_scales, &coupling);
        let last_nats = last.log_likelihood_gradient(data).0;
        if last_nats > best_nats {
            best = last;
            best_nats = last_nats;
        }
        Ok((best, -best_nats / std::f64::consts::LN_2 / n))
    }
}
