//! Lossless compression of the Paired Pyramid.
//!
//! The image is decomposed into fine components `F_1..F_L` and the
//! coarsest residue `I_L`. Each becomes an independently range-coded
//! sub-stream:
//!
//! - `F_i` is coded group by group along a squeeze scan plan, each sample
//!   under a context made of the co-located coarse sample of `I_i` and
//!   neighbours from earlier groups;
//! - `I_L` is coded in raster order with its left and upper neighbours as
//!   context.
//!
//! Decoding runs coarsest first; `I_{i-1}` follows from `I_i` and `F_i`.

pub mod context;
pub mod model;
pub mod range_coder;
pub mod stream;

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{Axis, Image, Shape};
use crate::mixture::{fit, FitConfig, LogisticMixtureParams};
use crate::pyramid::{
    auto_levels, decompose_step, level_shapes, merge_pairs, reconstruct_step, split_pairs,
};
use crate::scan::{feasible_squeezes, make_scan_plan, raster_plan, ScanPlan};
use crate::stats::Histogram;

pub use context::{ContextSpec, NeighborKind};
pub use model::StaticStreamParams;
pub use stream::{CodedStream, ModelMode, StreamHeader};

use context::CausalView;
use model::StreamModel;
use range_coder::{RangeDecoder, RangeEncoder};

/// Squeezes per level unless configured otherwise.
pub const DEFAULT_N_SQUEEZE: u32 = 2;
/// Logistic components per fitted static-mode distribution.
pub const DEFAULT_MIXTURES: usize = 10;
/// A context bucket gets its own static distribution only with at least
/// this many samples; smaller buckets share the stream-wide fit.
pub const STATIC_MIN_BUCKET_SAMPLES: usize = 4096;

/// Encoder settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeConfig {
    /// Pyramid levels; `None` picks a 4×4 coarsest where possible.
    pub levels: Option<usize>,
    /// Requested squeezes: one value for every level, or one per level.
    /// Levels too small for the request use the largest feasible count.
    pub n_squeeze: Vec<u32>,
    pub mode: ModelMode,
    /// Components of each fitted static-mode mixture.
    pub mixtures: usize,
    /// Offset difference symbols by `2^(b-1)` before modeling.
    pub shift: bool,
    /// Code the raw removed samples instead of modulo differences.
    pub no_modulo: bool,
    pub contexts: ContextSpec,
    /// Decode the result and compare before returning.
    pub verify: bool,
    /// Seed of the static-mode fitting restarts.
    pub seed: u64,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            levels: None,
            n_squeeze: vec![DEFAULT_N_SQUEEZE],
            mode: ModelMode::Adaptive,
            mixtures: DEFAULT_MIXTURES,
            shift: true,
            no_modulo: false,
            contexts: ContextSpec::default(),
            verify: cfg!(debug_assertions),
            seed: 0,
        }
    }
}

/// Code length of one sub-stream.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRate {
    /// `F1`, `F2`, ... or `coarsest`.
    pub label: String,
    pub samples: usize,
    pub payload_bits: u64,
    /// `Σ -log2 p` of the coded symbols under the model.
    pub ideal_bits: f64,
    /// `payload_bits / samples`.
    pub bits_per_dim: f64,
    /// Fraction of all image samples in this stream.
    pub pixel_share: f64,
}

/// Per-level and total code lengths of an encoded image.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// `F_1..F_L`, then the coarsest.
    pub levels: Vec<LevelRate>,
    pub samples: usize,
    /// Header plus length table plus checksum.
    pub header_bits: u64,
    pub payload_bits: u64,
    pub total_bits: u64,
    /// Payload bits per sample.
    pub bits_per_dim: f64,
    /// Whole-file bits per sample.
    pub file_bits_per_dim: f64,
}

impl fmt::Display for RateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:>10} {:>12} {:>10}",
            "level", "bits/dim", "pixel share", "bytes"
        )?;
        for l in &self.levels {
            writeln!(
                f,
                "{:<10} {:>10.4} {:>12.6} {:>10}",
                l.label,
                l.bits_per_dim,
                l.pixel_share,
                l.payload_bits / 8
            )?;
        }
        writeln!(f, "payload bits/dim: {:.4}", self.bits_per_dim)?;
        write!(
            f,
            "file bits/dim: {:.4} ({} bytes, header {} bytes)",
            self.file_bits_per_dim,
            self.total_bits / 8,
            self.header_bits / 8
        )
    }
}

/// Stream label used in reports.
fn stream_label(index: usize, levels: usize) -> String {
    if index == levels {
        "coarsest".to_string()
    } else {
        format!("F{}", index + 1)
    }
}

/// One sub-stream's geometry and context source.
struct StreamLayout<'a> {
    shape: Shape,
    plan: ScanPlan,
    /// Co-located coarse samples; `None` for the raster-coded coarsest.
    coarse: Option<&'a Image>,
    kind: NeighborKind,
}

/// Visits every sample of a stream in coding order, handing the callback
/// its context bucket and a mutable reference to its symbol.
fn walk<F>(
    layout: &StreamLayout,
    spec: &ContextSpec,
    bit_depth: u8,
    symbols: &mut [u16],
    mut code: F,
) -> Result<()>
where
    F: FnMut(usize, &mut u16) -> Result<()>,
{
    let ch_count = layout.shape.channels;
    let view = CausalView::new(&layout.plan, ch_count);
    let w = layout.shape.width;
    let mut values = arrayvec::ArrayVec::<u32, { context::MAX_NEIGHBORS }>::new();
    for g in 0..layout.plan.group_count() {
        for (r, c) in layout.plan.group(g) {
            let base = (r * w + c) * ch_count;
            match layout.coarse {
                Some(coarse) => {
                    let nbs = view.neighbors(r, c);
                    for ch in 0..ch_count {
                        values.clear();
                        for &q in &nbs {
                            values.push(u32::from(view.get(symbols, (r, c), q, ch)?));
                        }
                        let cv = u32::from(coarse.samples()[base + ch]);
                        let bucket = spec.bucket(layout.kind, bit_depth, cv, &values);
                        code(bucket, &mut symbols[base + ch])?;
                    }
                }
                None => {
                    for ch in 0..ch_count {
                        let above = if r > 0 {
                            Some(u32::from(view.get(symbols, (r, c), (r - 1, c), ch)?))
                        } else {
                            None
                        };
                        let left = if c > 0 {
                            Some(u32::from(view.get(symbols, (r, c), (r, c - 1), ch)?))
                        } else {
                            None
                        };
                        let (cv, nb) = match (above, left) {
                            (Some(a), l) => (a, l),
                            (None, Some(l)) => (l, None),
                            (None, None) => (0, None),
                        };
                        values.clear();
                        values.extend(nb);
                        let bucket = spec.bucket(NeighborKind::Raw, bit_depth, cv, &values);
                        code(bucket, &mut symbols[base + ch])?;
                    }
                }
            }
        }
    }
    Ok(())
}

fn effective_squeezes(requested: &[u32], shapes: &[Shape], levels: usize) -> Result<Vec<u8>> {
    if requested.is_empty() || (requested.len() != 1 && requested.len() < levels) {
        return Err(Error::domain(format!(
            "need one n_squeeze value or at least {levels}, got {}",
            requested.len()
        )));
    }
    Ok((0..levels)
        .map(|i| {
            let n = if requested.len() == 1 {
                requested[0]
            } else {
                requested[i]
            };
            let s = shapes[i + 1];
            feasible_squeezes(s.height, s.width, n) as u8
        })
        .collect())
}

fn layouts<'a>(header: &StreamHeader, coarse_chain: &'a [Image]) -> Result<Vec<StreamLayout<'a>>> {
    let shapes = level_shapes(header.shape, header.levels)?;
    let kind = if header.no_modulo {
        NeighborKind::Raw
    } else {
        NeighborKind::Residual {
            shift: u32::from(header.shift),
        }
    };
    let mut out = Vec::with_capacity(header.levels + 1);
    for i in 1..=header.levels {
        let s = shapes[i];
        out.push(StreamLayout {
            shape: s,
            plan: make_scan_plan(s.height, s.width, u32::from(header.n_squeeze[i - 1]))?,
            coarse: coarse_chain.get(i),
            kind,
        });
    }
    let s = shapes[header.levels];
    out.push(StreamLayout {
        shape: s,
        plan: raster_plan(s.height, s.width),
        coarse: None,
        kind: NeighborKind::Raw,
    });
    Ok(out)
}

fn static_fit_config(seed: u64) -> FitConfig {
    FitConfig {
        max_iters: 200,
        restarts: 2,
        seed,
        ..FitConfig::default()
    }
}

/// Fits a mixture to stream symbols. Wide symbols are fitted on their high
/// byte and the parameters scaled back up: only the high byte uses them.
fn fit_symbols(
    symbols: &[u16],
    bit_depth: u8,
    m: usize,
    seed: u64,
) -> Result<LogisticMixtureParams> {
    let drop = bit_depth.saturating_sub(8);
    let fit_bits = bit_depth - drop;
    let mut h = Histogram::new(fit_bits)?;
    for &s in symbols {
        h.add(u32::from(s) >> drop, 1);
    }
    let p = fit(&h, m, &static_fit_config(seed))?.params;
    if drop == 0 {
        return Ok(p);
    }
    let unit = f64::from(1u32 << drop);
    LogisticMixtureParams::new(
        p.weights().to_vec(),
        p.means().iter().map(|mu| (mu + 0.5) * unit - 0.5).collect(),
        p.scales().iter().map(|s| s * unit).collect(),
        bit_depth,
    )
}

/// Static-mode parameters of one stream from the buckets its symbols fall
/// into.
fn fit_stream(
    layout: &StreamLayout,
    spec: &ContextSpec,
    bit_depth: u8,
    symbols: &[u16],
    m: usize,
    seed: u64,
) -> Result<StaticStreamParams> {
    let mut per_bucket: Vec<Vec<u16>> = vec![Vec::new(); spec.bucket_count()];
    let mut scratch = symbols.to_vec();
    walk(layout, spec, bit_depth, &mut scratch, |b, s| {
        per_bucket[b].push(*s);
        Ok(())
    })?;
    let big: Vec<usize> = (0..per_bucket.len())
        .filter(|&b| per_bucket[b].len() >= STATIC_MIN_BUCKET_SAMPLES)
        .collect();
    let mut jobs: Vec<&[u16]> = vec![symbols];
    jobs.extend(big.iter().map(|&b| per_bucket[b].as_slice()));
    let sets = jobs
        .par_iter()
        .map(|s| fit_symbols(s, bit_depth, m, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut map = vec![0u16; spec.bucket_count()];
    for (i, &b) in big.iter().enumerate() {
        map[b] = (i + 1) as u16;
    }
    Ok(StaticStreamParams { sets, map })
}

fn new_model(header: &StreamHeader, stream: usize) -> Result<StreamModel> {
    Ok(match header.mode {
        ModelMode::Adaptive => StreamModel::adaptive(
            header.bit_depth,
            header.contexts.bucket_count(),
            usize::from(header.contexts.neighbor_bins),
        ),
        ModelMode::Static => StreamModel::fixed(header.bit_depth, &header.static_params[stream])?,
    })
}

fn encode_stream(
    header: &StreamHeader,
    stream: usize,
    layout: &StreamLayout,
    symbols: &[u16],
) -> Result<(Vec<u8>, f64)> {
    let mut model = new_model(header, stream)?;
    let mut enc = RangeEncoder::new();
    let mut scratch = symbols.to_vec();
    walk(
        layout,
        &header.contexts,
        header.bit_depth,
        &mut scratch,
        |b, s| model.encode(&mut enc, b, u32::from(*s)),
    )?;
    Ok((enc.finish(), model.ideal_bits()))
}

fn decode_stream(
    header: &StreamHeader,
    stream: usize,
    layout: &StreamLayout,
    payload: &[u8],
) -> Result<Image> {
    let mut model = new_model(header, stream)?;
    let mut dec = RangeDecoder::new(payload);
    let mut symbols = vec![0u16; layout.shape.samples()];
    let limit = 1u32 << header.bit_depth;
    walk(
        layout,
        &header.contexts,
        header.bit_depth,
        &mut symbols,
        |b, s| {
            let v = model.decode(&mut dec, b)?;
            if v >= limit {
                return Err(Error::integrity("decoded symbol out of range"));
            }
            *s = v as u16;
            Ok(())
        },
    )?;
    Image::from_shape(layout.shape, header.bit_depth, symbols)
}

/// Encodes `img`, also returning the per-level code lengths.
pub fn encode_with_report(img: &Image, config: &EncodeConfig) -> Result<(CodedStream, RateReport)> {
    config.contexts.validate()?;
    if config.mixtures == 0 || config.mixtures > usize::from(u8::MAX) {
        return Err(Error::domain(format!(
            "mixture count {} outside 1..=255",
            config.mixtures
        )));
    }
    if img.channels() > usize::from(u8::MAX) {
        return Err(Error::shape(format!(
            "{} channels exceed 255",
            img.channels()
        )));
    }
    let levels = config
        .levels
        .unwrap_or_else(|| auto_levels(img.height(), img.width()));
    if levels > usize::from(u8::MAX) {
        return Err(Error::shape(format!("{levels} levels exceed 255")));
    }
    let shapes = level_shapes(img.shape(), levels)?;
    let b = img.bit_depth();
    let shift = if config.shift && !config.no_modulo {
        1u16 << (b - 1)
    } else {
        0
    };
    let mut header = StreamHeader {
        shape: img.shape(),
        bit_depth: b,
        levels,
        shift,
        n_squeeze: effective_squeezes(&config.n_squeeze, &shapes, levels)?,
        mode: config.mode,
        no_modulo: config.no_modulo,
        contexts: config.contexts,
        mixtures: if config.mode == ModelMode::Static {
            config.mixtures as u8
        } else {
            0
        },
        static_params: Vec::new(),
    };

    // coarse chain I_0..I_L and the symbols of every stream
    let mask = img.max_value() as u16;
    let mut chain = vec![img.clone()];
    let mut streams: Vec<Vec<u16>> = Vec::with_capacity(levels + 1);
    for i in 1..=levels {
        let axis = Axis::for_level(i);
        let prev = &chain[i - 1];
        let (coarse, symbols) = if config.no_modulo {
            let (kept, removed) = split_pairs(prev, axis)?;
            (kept, removed.into_samples())
        } else {
            let (coarse, fine) = decompose_step(prev, axis)?;
            let s = fine
                .samples()
                .iter()
                .map(|&f| f.wrapping_add(shift) & mask)
                .collect();
            (coarse, s)
        };
        streams.push(symbols);
        chain.push(coarse);
    }
    streams.push(chain[levels].samples().to_vec());

    let lays = layouts(&header, &chain)?;
    if config.mode == ModelMode::Static {
        header.static_params = lays
            .iter()
            .zip(&streams)
            .map(|(l, s)| fit_stream(l, &header.contexts, b, s, config.mixtures, config.seed))
            .collect::<Result<Vec<_>>>()?;
    }

    let coded = lays
        .par_iter()
        .zip(streams.par_iter())
        .enumerate()
        .map(|(i, (l, s))| encode_stream(&header, i, l, s))
        .collect::<Result<Vec<_>>>()?;

    let samples = img.samples().len();
    let mut level_rates = Vec::with_capacity(levels + 1);
    for (i, (payload, ideal)) in coded.iter().enumerate() {
        let n = lays[i].shape.samples();
        let bits = payload.len() as u64 * 8;
        level_rates.push(LevelRate {
            label: stream_label(i, levels),
            samples: n,
            payload_bits: bits,
            ideal_bits: *ideal,
            bits_per_dim: bits as f64 / n as f64,
            pixel_share: n as f64 / samples as f64,
        });
    }
    let stream = CodedStream {
        header,
        payloads: coded.into_iter().map(|(p, _)| p).collect(),
        crc32: crc32fast::hash(&img.raw_bytes()),
    };
    let bytes = stream.to_bytes()?;
    let payload_bits: u64 = level_rates.iter().map(|l| l.payload_bits).sum();
    let total_bits = bytes.len() as u64 * 8;
    let report = RateReport {
        levels: level_rates,
        samples,
        header_bits: total_bits - payload_bits,
        payload_bits,
        total_bits,
        bits_per_dim: payload_bits as f64 / samples as f64,
        file_bits_per_dim: total_bits as f64 / samples as f64,
    };
    if config.verify {
        let back = decode(&CodedStream::from_bytes(&bytes)?)?;
        if &back != img {
            return Err(Error::integrity(
                "shadow decode does not reproduce the input",
            ));
        }
    }
    Ok((stream, report))
}

pub fn encode(img: &Image, config: &EncodeConfig) -> Result<CodedStream> {
    Ok(encode_with_report(img, config)?.0)
}

/// Encodes straight to bytes.
pub fn encode_to_bytes(img: &Image, config: &EncodeConfig) -> Result<Vec<u8>> {
    encode(img, config)?.to_bytes()
}

/// Per-level code lengths of `img` under `config`.
pub fn rate_report(img: &Image, config: &EncodeConfig) -> Result<RateReport> {
    Ok(encode_with_report(img, config)?.1)
}

/// Reconstructs the image and verifies its checksum.
pub fn decode(stream: &CodedStream) -> Result<Image> {
    let h = &stream.header;
    h.validate()?;
    if stream.payloads.len() != h.levels + 1 {
        return Err(Error::format(
            "payload count does not match the level count",
        ));
    }
    let shapes = level_shapes(h.shape, h.levels)?;
    // fine streams get their coarse context once the level above is decoded
    let plain = layouts(h, &[])?;
    let mut cur = decode_stream(h, h.levels, &plain[h.levels], &stream.payloads[h.levels])?;
    let mask = ((1u32 << h.bit_depth) - 1) as u16;
    for i in (1..=h.levels).rev() {
        let s = shapes[i];
        let layout = StreamLayout {
            shape: s,
            plan: make_scan_plan(s.height, s.width, u32::from(h.n_squeeze[i - 1]))?,
            coarse: Some(&cur),
            kind: plain[i - 1].kind,
        };
        let symbols = decode_stream(h, i - 1, &layout, &stream.payloads[i - 1])?;
        let axis = Axis::for_level(i);
        cur = if h.no_modulo {
            merge_pairs(&cur, &symbols, axis)?
        } else {
            let fine: Vec<u16> = symbols
                .samples()
                .iter()
                .map(|&v| v.wrapping_sub(h.shift) & mask)
                .collect();
            let fine = Image::from_shape(s, h.bit_depth, fine)?;
            reconstruct_step(&cur, &fine, axis)?
        };
    }
    if crc32fast::hash(&cur.raw_bytes()) != stream.crc32 {
        return Err(Error::integrity("checksum mismatch after decoding"));
    }
    Ok(cur)
}

/// Parses and decodes a byte stream.
pub fn decode_bytes(data: &[u8]) -> Result<Image> {
    decode(&CodedStream::from_bytes(data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(h: usize, w: usize, c: usize, b: u8, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = h * w * c;
        let s = (0..n)
            .map(|_| rng.random_range(0..(1u32 << b)) as u16)
            .collect();
        Image::new(w, h, c, b, s).unwrap()
    }

    /// Smooth gradient plus mild noise, like a photo.
    fn photo_like(h: usize, w: usize, c: usize, b: u8, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max = (1u32 << b) - 1;
        let mut s = Vec::with_capacity(h * w * c);
        for r in 0..h {
            for col in 0..w {
                for ch in 0..c {
                    let base = ((r + 2 * col + 17 * ch) as f64 / (h + 2 * w) as f64) * max as f64;
                    let jitter = rng.random_range(-2.0..2.0) * (max as f64 / 255.0);
                    s.push((base + jitter).round().clamp(0.0, max as f64) as u16);
                }
            }
        }
        Image::new(w, h, c, b, s).unwrap()
    }

    fn cfg(mode: ModelMode) -> EncodeConfig {
        EncodeConfig {
            mode,
            verify: true,
            ..EncodeConfig::default()
        }
    }

    #[test]
    fn constant_image_is_almost_free() {
        let img = Image::new(256, 256, 1, 8, vec![77; 256 * 256]).unwrap();
        let r = rate_report(&img, &cfg(ModelMode::Adaptive)).unwrap();
        assert!(r.bits_per_dim < 0.05, "{}", r.bits_per_dim);
    }

    #[test]
    fn noise_costs_about_eight_bits() {
        let img = noise(256, 256, 1, 8, 1);
        let r = rate_report(&img, &cfg(ModelMode::Adaptive)).unwrap();
        assert!((8.0..8.1).contains(&r.bits_per_dim), "{}", r.bits_per_dim);
    }

    #[test]
    fn lossless_across_depths_and_modes() {
        for b in [1u8, 5, 8, 16] {
            for mode in [ModelMode::Adaptive, ModelMode::Static] {
                let img = photo_like(32, 48, 3, b, u64::from(b));
                let bytes = encode_to_bytes(&img, &cfg(mode)).unwrap();
                assert_eq!(decode_bytes(&bytes).unwrap(), img, "b={b} {mode:?}");
            }
        }
    }

    #[test]
    fn odd_shapes_and_explicit_levels() {
        let img = photo_like(36, 44, 2, 8, 9);
        for levels in [0, 1, 3] {
            let c = EncodeConfig {
                levels: Some(levels),
                ..cfg(ModelMode::Adaptive)
            };
            let s = encode(&img, &c).unwrap();
            assert_eq!(s.header.levels, levels);
            assert_eq!(decode(&s).unwrap(), img);
        }
    }

    #[test]
    fn smooth_images_beat_noise() {
        let img = photo_like(128, 128, 3, 8, 4);
        let r = rate_report(&img, &cfg(ModelMode::Adaptive)).unwrap();
        assert!(r.bits_per_dim < 4.0, "{}", r.bits_per_dim);
        let s = rate_report(&img, &cfg(ModelMode::Static)).unwrap();
        assert!(s.bits_per_dim < 4.5, "{}", s.bits_per_dim);
    }

    #[test]
    fn truncation_and_bad_magic_are_reported() {
        let img = photo_like(32, 32, 1, 8, 2);
        let bytes = encode_to_bytes(&img, &cfg(ModelMode::Adaptive)).unwrap();
        for cut in [10, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(decode_bytes(&bytes[..cut]), Err(Error::Integrity(_))),
                "cut {cut}"
            );
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_bytes(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode_bytes(&bad), Err(Error::Format(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_bytes(&long), Err(Error::Format(_))));
    }

    #[test]
    fn corrupted_payload_fails_integrity() {
        let img = photo_like(64, 64, 1, 8, 3);
        let mut bytes = encode_to_bytes(&img, &cfg(ModelMode::Adaptive)).unwrap();
        let n = bytes.len();
        bytes[n - 20] ^= 0x55;
        assert!(matches!(decode_bytes(&bytes), Err(Error::Integrity(_))));
    }

    #[test]
    fn header_round_trips() {
        let img = photo_like(40, 40, 3, 10, 5);
        let c = EncodeConfig {
            n_squeeze: vec![1, 2, 0, 3],
            levels: Some(4),
            contexts: ContextSpec {
                coarse_bins: 8,
                neighbor_bins: 6,
            },
            ..cfg(ModelMode::Static)
        };
        let s = encode(&img, &c).unwrap();
        let back = CodedStream::from_bytes(&s.to_bytes().unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.header.shift, 512);
    }

    #[test]
    fn shift_and_modulo_options_all_decode() {
        let img = photo_like(48, 40, 3, 8, 6);
        let mut rates = Vec::new();
        for (shift, no_modulo) in [(true, false), (false, false), (true, true)] {
            let c = EncodeConfig {
                shift,
                no_modulo,
                ..cfg(ModelMode::Adaptive)
            };
            let (s, r) = encode_with_report(&img, &c).unwrap();
            assert_eq!(decode(&s).unwrap(), img);
            rates.push(r.bits_per_dim);
        }
        assert!(rates.iter().all(|r| r.is_finite()));
    }

    #[test]
    fn report_is_additive() {
        let img = photo_like(64, 96, 3, 8, 7);
        let r = rate_report(&img, &cfg(ModelMode::Adaptive)).unwrap();
        let weighted: f64 = r
            .levels
            .iter()
            .map(|l| l.bits_per_dim * l.pixel_share)
            .sum();
        assert!((weighted - r.bits_per_dim).abs() < 1e-6);
        let share: f64 = r.levels.iter().map(|l| l.pixel_share).sum();
        assert!((share - 1.0).abs() < 1e-12);
        assert_eq!(r.total_bits, r.header_bits + r.payload_bits);
        for l in &r.levels {
            assert!(
                l.payload_bits as f64 <= l.ideal_bits * 1.001 + 64.0,
                "{l:?}"
            );
        }
        let text = r.to_string();
        assert!(text.contains("coarsest") && text.contains("F1"));
    }

    #[test]
    fn squeezes_are_clamped_per_level() {
        // levels are 6x12, 6x6, 3x6, 3x3: a squeeze needs both sides even
        let img = photo_like(12, 12, 1, 8, 8);
        let c = EncodeConfig {
            levels: Some(4),
            n_squeeze: vec![5],
            ..cfg(ModelMode::Adaptive)
        };
        let s = encode(&img, &c).unwrap();
        assert_eq!(s.header.n_squeeze, vec![1, 1, 0, 0]);
        assert_eq!(decode(&s).unwrap(), img);
        let bad = EncodeConfig {
            levels: Some(4),
            n_squeeze: vec![1, 2],
            ..cfg(ModelMode::Adaptive)
        };
        assert!(matches!(encode(&img, &bad), Err(Error::Domain(_))));
    }

    #[test]
    fn encoding_is_deterministic() {
        let img = photo_like(64, 64, 3, 8, 10);
        for mode in [ModelMode::Adaptive, ModelMode::Static] {
            let a = encode_to_bytes(&img, &cfg(mode)).unwrap();
            let b = encode_to_bytes(&img, &cfg(mode)).unwrap();
            assert_eq!(a, b);
        }
    }
}
