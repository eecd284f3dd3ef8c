//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pyrcodec::codec::range_coder::{RangeDecoder, RangeEncoder};
use pyrcodec::codec::{self, EncodeConfig, ModelMode};
use pyrcodec::mixture::{fit, FitConfig, LogisticMixtureParams};
use pyrcodec::postprocess::{despeckle, psnr, DespeckleConfig};
use pyrcodec::ppm::read_ppm;
use pyrcodec::pyramid::{auto_levels, build_pyramid, invert_pyramid, mod_add, mod_diff};
use pyrcodec::scan::critical_path;
use pyrcodec::stats::{
    mutual_information_curve, pyramid_components, pyramid_entropy_profile, Histogram,
};
use pyrcodec::Image;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn corpus() -> Vec<Image> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus/photos");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("corpus at {}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_ppm(p).unwrap()).collect()
}

/// Random content of several kinds: noise, gradients, flats, and images
/// pinned to the extremes so differences wrap.
fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, b: u8) -> Image {
    let max = (1u32 << b) - 1;
    let kind = rng.random_range(0..4);
    let level = rng.random_range(0..=max);
    let samples = (0..h * w * c)
        .map(|i| {
            let v = match kind {
                0 => rng.random_range(0..=max),
                1 => {
                    let (r, col) = (i / (w * c), (i / c) % w);
                    let g = (r + col) as u64 * u64::from(max) / (h + w) as u64;
                    (g as u32 + rng.random_range(0..=max / 16 + 1)).min(max)
                }
                2 => level,
                _ => {
                    if rng.random_bool(0.5) {
                        rng.random_range(0..=max.min(2))
                    } else {
                        max - rng.random_range(0..=max.min(2))
                    }
                }
            };
            v as u16
        })
        .collect();
    Image::new(w, h, c, b, samples).unwrap()
}

fn random_side(rng: &mut ChaCha8Rng) -> usize {
    // mostly small, some large, a few at the 512 limit
    let cap = match rng.random_range(0..100) {
        0..70 => 64,
        70..97 => 256,
        _ => 512,
    };
    2 * rng.random_range(1..=cap / 2)
}

fn losslessness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 1000;
    let mut codec_checked = 0;
    let mut failures = Vec::new();
    for i in 0..n {
        let b = [1u8, 5, 8, 16][i % 4];
        let (h, w) = if i < 8 {
            ([2, 512, 2, 512][i % 4], [2, 512, 512, 2][i % 4])
        } else {
            (random_side(&mut rng), random_side(&mut rng))
        };
        let c = [1, 3, 1, 3, 2, 4][rng.random_range(0..6)];
        let img = random_image(&mut rng, h, w, c, b);
        let levels = auto_levels(h, w);
        let pyr = build_pyramid(&img, levels).unwrap();
        if invert_pyramid(&pyr).unwrap() != img {
            failures.push(format!("pyramid {h}x{w}x{c}@{b}"));
        }
        let cfg = EncodeConfig {
            mode: if i % 10 == 9 {
                ModelMode::Static
            } else {
                ModelMode::Adaptive
            },
            n_squeeze: vec![rng.random_range(0..=3)],
            no_modulo: i % 7 == 3,
            shift: i % 5 != 1,
            verify: false,
            ..EncodeConfig::default()
        };
        let bytes = codec::encode_to_bytes(&img, &cfg).unwrap();
        match codec::decode_bytes(&bytes) {
            Ok(back) if back == img => codec_checked += 1,
            _ => failures.push(format!("codec {h}x{w}x{c}@{b} {cfg:?}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        failures.is_empty() && secs < 300.0,
        format!(
            "{n} images, {codec_checked} codec round trips, {} failures, {secs:.1}s{}",
            failures.len(),
            failures
                .first()
                .map(|f| format!(" (first: {f})"))
                .unwrap_or_default()
        ),
    )
}

fn modulo_oracle() -> Outcome {
    let mut pairs = 0u64;
    for b in 1..=8u8 {
        let k = 1i64 << b;
        for x in 0..k as u32 {
            for y in 0..k as u32 {
                let f = mod_diff(x, y, b).unwrap();
                let expect = (i64::from(x) - i64::from(y)).rem_euclid(k) as u32;
                if f != expect || mod_add(f, y, b).unwrap() != x {
                    return Err(format!("b={b} x={x} y={y}: diff {f}, expected {expect}"));
                }
                pairs += 1;
            }
        }
    }
    Ok(format!("{pairs} pairs over b=1..8 exact"))
}

/// Direction checks on a non-increasing-toward-finer sequence
/// `[F_1, F_2, ..., F_L]`: counts `F_i > F_{i+1}` violations.
fn violations(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[0] > w[1]).count()
}

fn entropy_drop(images: &[Image]) -> Outcome {
    let levels = auto_levels(images[0].height(), images[0].width());
    let rows = pyramid_entropy_profile(images, levels).unwrap();
    let h0 = rows[0].entropy_bits;
    let fines: Vec<f64> = rows[1..=levels].iter().map(|r| r.entropy_bits).collect();
    let v = violations(&fines);
    check(
        fines[0] <= h0 - 1.0 && v <= 1,
        format!(
            "{} images: H(I_0)={h0:.3} H(F_1)={:.3} drop={:.3}, {v} ordering violations over {levels} levels",
            images.len(),
            fines[0],
            h0 - fines[0]
        ),
    )
}

fn mi_localization(images: &[Image]) -> Outcome {
    let levels = auto_levels(images[0].height(), images[0].width());
    let comps = pyramid_components(images, levels).unwrap();
    let refs = |k: usize| comps[k].1.iter().collect::<Vec<&Image>>();
    let orig = mutual_information_curve(&refs(0), 32, None).unwrap();
    let f1 = mutual_information_curve(&refs(1), 32, None).unwrap();
    let worse: Vec<usize> = (0..32)
        .filter(|&i| f1.mi_bits[i] >= orig.mi_bits[i])
        .map(|i| i + 1)
        .collect();
    // d = 1 across fine levels whose grids still hold a neighbour pair
    let mut at_one = Vec::new();
    for k in 1..=levels {
        let r = refs(k);
        if r[0].height().min(r[0].width()) < 2 {
            break;
        }
        at_one.push(mutual_information_curve(&r, 1, None).unwrap().mi_bits[0]);
    }
    let v = violations(&at_one);
    check(
        worse.is_empty() && v <= 1,
        format!(
            "MI(1) I_0={:.3} F_1={:.3}; MI(32) I_0={:.3} F_1={:.3}; F_1 not below I_0 at d={worse:?}; {v} level-order violations over {} levels",
            orig.mi_bits[0],
            f1.mi_bits[0],
            orig.mi_bits[31],
            f1.mi_bits[31],
            at_one.len()
        ),
    )
}

fn random_params(rng: &mut ChaCha8Rng, b: u8) -> LogisticMixtureParams {
    let m = rng.random_range(1..=10);
    let support = f64::from(1u32 << b);
    let logits: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
    let means: Vec<f64> = (0..m)
        .map(|_| rng.random_range(-0.2 * support..1.2 * support))
        .collect();
    let log_scales: Vec<f64> = (0..m)
        .map(|_| rng.random_range(-8.0..(support.ln() + 1.0)))
        .collect();
    LogisticMixtureParams::from_unconstrained(&logits, &means, &log_scales, b).unwrap()
}

fn mixture_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_norm: f64 = 0.0;
    for i in 0..1000 {
        let b = [1u8, 5, 8, 10][i % 4];
        let p = random_params(&mut rng, b);
        let total: f64 = (0..p.support()).map(|x| p.pmf(x).unwrap()).sum();
        worst_norm = worst_norm.max((total - 1.0).abs());
    }

    // analytic gradient against central differences in unconstrained space
    let mut worst_grad: f64 = 0.0;
    for _ in 0..20 {
        let m = rng.random_range(1..=4);
        let logits: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let means: Vec<f64> = (0..m).map(|_| rng.random_range(40.0..210.0)).collect();
        let log_scales: Vec<f64> = (0..m).map(|_| rng.random_range(1.0..3.5)).collect();
        let mut counts = vec![0u64; 256];
        for _ in 0..5000 {
            counts[rng.random_range(0..256)] += 1;
        }
        let hist = Histogram::from_counts(8, counts).unwrap();
        let nats = |l: &[f64], mu: &[f64], s: &[f64]| {
            LogisticMixtureParams::from_unconstrained(l, mu, s, 8)
                .unwrap()
                .log_likelihood(&hist)
                .unwrap()
                .nats
        };
        let (_, g) = LogisticMixtureParams::from_unconstrained(&logits, &means, &log_scales, 8)
            .unwrap()
            .log_likelihood_gradient(&hist)
            .unwrap();
        let eps = 1e-5;
        for group in 0..3 {
            for k in 0..m {
                let mut plus = [logits.clone(), means.clone(), log_scales.clone()];
                let mut minus = plus.clone();
                plus[group][k] += eps;
                minus[group][k] -= eps;
                let fd = (nats(&plus[0], &plus[1], &plus[2])
                    - nats(&minus[0], &minus[1], &minus[2]))
                    / (2.0 * eps);
                let an = [&g.logits, &g.means, &g.log_scales][group][k];
                let rel = (an - fd).abs() / fd.abs().max(1.0);
                worst_grad = worst_grad.max(rel);
            }
        }
    }

    // two well-separated components, 10^6 samples
    let truth =
        LogisticMixtureParams::new(vec![0.4, 0.6], vec![60.0, 180.0], vec![6.0, 9.0], 8).unwrap();
    let mut counts = vec![0u64; 256];
    for _ in 0..1_000_000 {
        counts[truth.sample(&mut rng) as usize] += 1;
    }
    let hist = Histogram::from_counts(8, counts).unwrap();
    let fitted = fit(&hist, 2, &FitConfig::default()).unwrap().params;
    let mut means = fitted.means().to_vec();
    means.sort_by(f64::total_cmp);
    let err = (means[0] - 60.0).abs().max((means[1] - 180.0).abs());

    check(
        worst_norm <= 1e-9 && worst_grad <= 1e-4 && err <= 0.5,
        format!(
            "normalization error {worst_norm:.2e}, gradient rel error {worst_grad:.2e}, recovered means {:.3}/{:.3} (error {err:.3})",
            means[0], means[1]
        ),
    )
}

fn coder_efficiency() -> Outcome {
    let freqs = [
        21000u32, 15000, 11000, 8000, 5000, 3000, 1536, 700, 200, 100,
    ];
    let total: u32 = freqs.iter().sum();
    let cum: Vec<u32> = std::iter::once(0)
        .chain(freqs.iter().scan(0, |s, &f| {
            *s += f;
            Some(*s)
        }))
        .collect();
    let entropy: f64 = freqs
        .iter()
        .map(|&f| {
            let p = f64::from(f) / f64::from(total);
            -p * p.log2()
        })
        .sum();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 1_000_000;
    let symbols: Vec<usize> = (0..n)
        .map(|_| {
            let t = rng.random_range(0..total);
            cum.partition_point(|&c| c <= t) - 1
        })
        .collect();
    let mut enc = RangeEncoder::new();
    for &s in &symbols {
        enc.encode(cum[s], freqs[s], total).unwrap();
    }
    let bytes = enc.finish();
    let mut dec = RangeDecoder::new(&bytes);
    let mut decoded_ok = true;
    for &s in &symbols {
        let t = dec.target(total).unwrap();
        let d = cum.partition_point(|&c| c <= t) - 1;
        decoded_ok &= d == s && dec.consume(cum[d], freqs[d], total).is_ok();
    }
    let rate = bytes.len() as f64 * 8.0 / n as f64;
    let rel = (rate - entropy).abs() / entropy;
    check(
        rel < 0.005 && decoded_ok,
        format!(
            "rate {rate:.5} vs entropy {entropy:.5} bits/symbol ({:.3}% off), decoded {decoded_ok}",
            rel * 100.0
        ),
    )
}

fn critical_path_check() -> Outcome {
    let t = critical_path(1024, 1, &[2]).unwrap().total_steps;
    // 2·log2 N0 levels to a 1×1 coarsest: one raster step plus 4^2 per
    // level except the first
    let mut mismatches = Vec::new();
    let mut totals = Vec::new();
    for k in 3..=12u32 {
        let got = critical_path(1u64 << k, 1, &[2]).unwrap().total_steps;
        let expect = 1 + 16 * (2 * u64::from(k) - 1);
        if got != expect {
            mismatches.push((1u64 << k, got, expect));
        }
        totals.push(got as i64);
    }
    let affine = totals.windows(3).all(|w| w[2] - w[1] == w[1] - w[0]);
    check(
        t == 305 && mismatches.is_empty() && affine,
        format!(
            "T(1024)={t}, slope {} per doubling, affine={affine}, mismatches {mismatches:?}",
            totals[1] - totals[0]
        ),
    )
}

fn corpus_bits(images: &[Image], cfg: &EncodeConfig) -> f64 {
    let mut bits = 0u64;
    let mut samples = 0usize;
    for img in images {
        let r = codec::rate_report(img, cfg).unwrap();
        bits += r.payload_bits;
        samples += r.samples;
    }
    bits as f64 / samples as f64
}

fn ablation(images: &[Image]) -> Outcome {
    let base = EncodeConfig {
        verify: false,
        ..EncodeConfig::default()
    };
    let default = corpus_bits(images, &base);
    let no_modulo = corpus_bits(
        images,
        &EncodeConfig {
            no_modulo: true,
            ..base.clone()
        },
    );
    let sq = |n| {
        corpus_bits(
            images,
            &EncodeConfig {
                n_squeeze: vec![n],
                ..base.clone()
            },
        )
    };
    let (s2, s1, s0) = (sq(2), sq(1), sq(0));
    check(
        default < no_modulo && s2 <= s1 && s1 <= s0,
        format!(
            "bits/dim default {default:.4}, no-modulo {no_modulo:.4}, n_squeeze 2/1/0 {s2:.4}/{s1:.4}/{s0:.4}"
        ),
    )
}

fn despeckle_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = DespeckleConfig::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for (side, colour) in [
        (256usize, [200u16, 40, 40]),
        (512, [30, 90, 160]),
        (320, [128, 128, 128]),
    ] {
        let clean = Image::new(side, side, 3, 8, colour.repeat(side * side)).unwrap();
        let mut noisy = clean.clone();
        let n = (0.001 * (side * side) as f64).round() as usize;
        for i in rand::seq::index::sample(&mut rng, side * side, n) {
            let v = if rng.random_bool(0.5) { 255 } else { 0 };
            for ch in 0..3 {
                noisy.set(i / side, i % side, ch, v).unwrap();
            }
        }
        let out = despeckle(&noisy, &cfg).unwrap();
        let before = psnr(&clean, &noisy).unwrap();
        let after = psnr(&clean, &out.image).unwrap();
        let touched = noisy
            .samples()
            .chunks(3)
            .zip(out.image.samples().chunks(3))
            .filter(|(a, b)| a != b)
            .count();
        let bound = (cfg.forest.contamination * (side * side) as f64).ceil() as usize;
        ok &= after - before > 10.0 && touched <= bound;
        lines.push(format!(
            "{side}²: {before:.1}->{after:.1} dB, {touched}/{bound} px"
        ));
    }
    check(ok, lines.join("; "))
}

fn main() {
    let photos = corpus();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("losslessness", Box::new(losslessness)),
        ("modulo arithmetic", Box::new(modulo_oracle)),
        ("entropy reduction", Box::new(|| entropy_drop(&photos))),
        ("MI localization", Box::new(|| mi_localization(&photos))),
        ("logistic mixture", Box::new(mixture_properties)),
        ("coder efficiency", Box::new(coder_efficiency)),
        ("critical path", Box::new(critical_path_check)),
        ("ablation directions", Box::new(|| ablation(&photos))),
        ("despeckle", Box::new(despeckle_check)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "{tag} criterion {}: {name}: {detail} [{:.1}s]",
            i + 1,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
