//! Marginal entropy and distance-resolved mutual information of images
//! and pyramid components.
//!
//! Samples are pooled over channels and over every image in a collection.
//! Mutual information uses the plug-in estimator on the joint histogram of
//! sample pairs at a fixed horizontal or vertical lag; estimates that do
//! not exceed their own Miller–Madow bias are reported as zero.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::pyramid::build_pyramid;

/// Bit depth above which joint histograms are requantized.
pub const MAX_JOINT_BITS: u8 = 8;

/// Counts of each sample value at a given bit depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    bit_depth: u8,
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    pub fn new(bit_depth: u8) -> Result<Histogram> {
        crate::image::check_bit_depth(bit_depth)?;
        Ok(Histogram {
            bit_depth,
            counts: vec![0; 1 << bit_depth],
            total: 0,
        })
    }

    /// Builds a histogram from explicit counts (`2^b` entries).
    pub fn from_counts(bit_depth: u8, counts: Vec<u64>) -> Result<Histogram> {
        crate::image::check_bit_depth(bit_depth)?;
        if counts.len() != 1 << bit_depth {
            return Err(Error::domain(format!(
                "{} counts supplied for bit depth {bit_depth}",
                counts.len()
            )));
        }
        let total = counts.iter().sum();
        Ok(Histogram {
            bit_depth,
            counts,
            total,
        })
    }

    pub fn from_image(img: &Image) -> Histogram {
        let mut h = Histogram::new(img.bit_depth()).expect("image bit depth is valid");
        h.add_samples(img.samples());
        h
    }

    pub fn add_samples(&mut self, samples: &[u16]) {
        for &s in samples {
            self.counts[s as usize] += 1;
        }
        self.total += samples.len() as u64;
    }

    pub fn add(&mut self, value: u32, count: u64) {
        self.counts[value as usize] += count;
        self.total += count;
    }

    /// Merges `other` into `self`; both must share a bit depth.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if other.bit_depth != self.bit_depth {
            return Err(Error::domain(format!(
                "cannot merge {}-bit histogram into {}-bit histogram",
                other.bit_depth, self.bit_depth
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Iterator over `(value, count)` for non-empty bins.
    pub fn nonzero(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(v, &c)| (v as u32, c))
    }

    /// Shannon entropy of the empirical distribution, in bits.
    pub fn entropy_bits(&self) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::domain("entropy of an empty histogram"));
        }
        Ok(entropy_of_counts(self.counts.iter().copied(), self.total))
    }
}

fn entropy_of_counts(counts: impl Iterator<Item = u64>, total: u64) -> f64 {
    let n = total as f64;
    let h: f64 = counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

fn pooled_histogram(images: &[&Image]) -> Result<Histogram> {
    let first = images
        .first()
        .ok_or_else(|| Error::domain("entropy of an empty collection"))?;
    let b = first.bit_depth();
    if let Some(bad) = images.iter().find(|i| i.bit_depth() != b) {
        return Err(Error::domain(format!(
            "mixed bit depths in collection: {b} and {}",
            bad.bit_depth()
        )));
    }
    Ok(images
        .par_iter()
        .map(|img| Histogram::from_image(img))
        .reduce(
            || Histogram::new(b).expect("valid depth"),
            |mut a, h| {
                a.merge(&h).expect("depths checked above");
                a
            },
        ))
}

/// Entropy (bits per sample) of all samples of all `images` pooled.
pub fn marginal_entropy(images: &[&Image]) -> Result<f64> {
    let h = pooled_histogram(images)?;
    h.entropy_bits()
}

/// One row of an entropy profile.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyRow {
    pub label: String,
    pub entropy_bits: f64,
}

/// Label used for fine component `F_i` in reports and CSV files.
pub fn fine_label(index: usize) -> String {
    format!("F{index}")
}

pub const ORIGINAL_LABEL: &str = "original";
pub const COARSEST_LABEL: &str = "coarsest";

/// Groups a collection of images into pyramid components:
/// `[original, F_1, ..., F_L, I_L]`, each as a list over the collection.
pub fn pyramid_components(images: &[Image], levels: usize) -> Result<Vec<(String, Vec<Image>)>> {
    let first = images
        .first()
        .ok_or_else(|| Error::domain("empty image collection"))?;
    let shape = first.shape();
    let b = first.bit_depth();
    if let Some(bad) = images
        .iter()
        .find(|i| i.shape() != shape || i.bit_depth() != b)
    {
        return Err(Error::domain(format!(
            "collection mixes {shape}@{b} and {}@{}",
            bad.shape(),
            bad.bit_depth()
        )));
    }
    let pyramids = images
        .par_iter()
        .map(|img| build_pyramid(img, levels))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(levels + 2);
    out.push((ORIGINAL_LABEL.to_string(), images.to_vec()));
    for i in 0..levels {
        out.push((
            fine_label(i + 1),
            pyramids.iter().map(|p| p.levels[i].fine.clone()).collect(),
        ));
    }
    out.push((
        COARSEST_LABEL.to_string(),
        pyramids.into_iter().map(|p| p.coarsest).collect(),
    ));
    Ok(out)
}

/// Entropies of the original images, each `F_i` and the coarsest residue,
/// pooled over the collection.
pub fn pyramid_entropy_profile(images: &[Image], levels: usize) -> Result<Vec<EntropyRow>> {
    pyramid_components(images, levels)?
        .into_iter()
        .map(|(label, comps)| {
            let refs: Vec<&Image> = comps.iter().collect();
            Ok(EntropyRow {
                label,
                entropy_bits: marginal_entropy(&refs)?,
            })
        })
        .collect()
}

/// Joint sample-pair histogram at a quantized depth.
#[derive(Debug, Clone)]
struct JointHistogram {
    bits: u8,
    counts: Vec<u64>,
    total: u64,
}

impl JointHistogram {
    fn new(bits: u8) -> Self {
        JointHistogram {
            bits,
            counts: vec![0; 1 << (2 * bits)],
            total: 0,
        }
    }

    fn merge(mut self, other: JointHistogram) -> Self {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.total += other.total;
        self
    }

    /// Plug-in mutual information and its Miller–Madow bias, both in bits.
    fn mutual_information(&self) -> (f64, f64) {
        if self.total == 0 {
            return (0.0, 0.0);
        }
        let k = 1usize << self.bits;
        let mut px = vec![0u64; k];
        let mut py = vec![0u64; k];
        for x in 0..k {
            for y in 0..k {
                let c = self.counts[x * k + y];
                px[x] += c;
                py[y] += c;
            }
        }
        let n = self.total as f64;
        let hx = entropy_of_counts(px.iter().copied(), self.total);
        let hy = entropy_of_counts(py.iter().copied(), self.total);
        let hxy = entropy_of_counts(self.counts.iter().copied(), self.total);
        let occupied = |v: &[u64]| v.iter().filter(|&&c| c > 0).count() as f64;
        let bias = (occupied(&self.counts) - occupied(&px) - occupied(&py) + 1.0)
            / (2.0 * n * std::f64::consts::LN_2);
        ((hx + hy - hxy).max(0.0), bias.max(0.0))
    }
}

/// Pair orientation for mutual-information lags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lag {
    /// `(r, c)` paired with `(r, c + d)`.
    Horizontal(usize),
    /// `(r, c)` paired with `(r + d, c)`.
    Vertical(usize),
}

fn joint_at_lag(img: &Image, lag: Lag, bits: u8, swap: bool) -> JointHistogram {
    let shift = img.bit_depth().saturating_sub(bits);
    let mut j = JointHistogram::new(bits);
    let Shape {
        height,
        width,
        channels,
    } = img.shape();
    let (dr, dc) = match lag {
        Lag::Horizontal(d) => (0, d),
        Lag::Vertical(d) => (d, 0),
    };
    if dr >= height || dc >= width {
        return j;
    }
    for r in 0..height - dr {
        for c in 0..width - dc {
            for ch in 0..channels {
                let a = (img.get(r, c, ch) >> shift) as usize;
                let b = (img.get(r + dr, c + dc, ch) >> shift) as usize;
                let (x, y) = if swap { (b, a) } else { (a, b) };
                j.counts[(x << bits) | y] += 1;
            }
        }
    }
    j.total = ((height - dr) * (width - dc) * channels) as u64;
    j
}

/// Mutual information estimate at one lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    /// Plug-in estimate, zeroed when not above `bias_bits`.
    pub mi_bits: f64,
    /// Raw plug-in estimate.
    pub plugin_bits: f64,
    /// Miller–Madow bias of the plug-in estimate.
    pub bias_bits: f64,
}

fn estimate_mi(images: &[&Image], lag: Lag, bits: u8, swap: bool) -> MiEstimate {
    let joint = images
        .par_iter()
        .map(|img| joint_at_lag(img, lag, bits, swap))
        .reduce(|| JointHistogram::new(bits), JointHistogram::merge);
    let (plugin, bias) = joint.mutual_information();
    MiEstimate {
        mi_bits: if plugin > bias { plugin } else { 0.0 },
        plugin_bits: plugin,
        bias_bits: bias,
    }
}

/// Mutual information of the pairs at one lag, pooled over `images`.
/// `swap` exchanges the roles of the two members (offset `-d` instead of
/// `+d`).
pub fn mutual_information_at(images: &[&Image], lag: Lag, swap: bool) -> Result<MiEstimate> {
    let b = check_collection(images)?;
    Ok(estimate_mi(images, lag, b.min(MAX_JOINT_BITS), swap))
}

fn check_collection(images: &[&Image]) -> Result<u8> {
    let first = images
        .first()
        .ok_or_else(|| Error::domain("empty image collection"))?;
    let b = first.bit_depth();
    if images.iter().any(|i| i.bit_depth() != b) {
        return Err(Error::domain("mixed bit depths in collection"));
    }
    Ok(b)
}

/// Mutual information as a function of pixel distance.
#[derive(Debug, Clone, PartialEq)]
pub struct MiCurve {
    pub distances: Vec<usize>,
    /// Mean of the horizontal and vertical estimates.
    pub mi_bits: Vec<f64>,
    pub horizontal: Vec<MiEstimate>,
    pub vertical: Vec<MiEstimate>,
    /// Bits per sample the joint histograms were built at.
    pub joint_bits: u8,
    /// True when samples were requantized to [`MAX_JOINT_BITS`].
    pub requantized: bool,
}

/// Plug-in mutual information between samples at horizontal and vertical
/// offsets `1..=max_distance`, averaged over the two orientations.
///
/// `joint_bits` caps the quantization of the joint histogram (at most
/// [`MAX_JOINT_BITS`]); `None` uses the images' own depth up to that cap.
pub fn mutual_information_curve(
    images: &[&Image],
    max_distance: usize,
    joint_bits: Option<u8>,
) -> Result<MiCurve> {
    let b = check_collection(images)?;
    if max_distance == 0 {
        return Err(Error::domain("max distance must be at least 1"));
    }
    if let Some(img) = images
        .iter()
        .find(|i| max_distance >= i.height().min(i.width()))
    {
        return Err(Error::domain(format!(
            "max distance {max_distance} does not fit a {} image",
            img.shape()
        )));
    }
    let bits = joint_bits.unwrap_or(b).min(b).clamp(1, MAX_JOINT_BITS);
    let mut curve = MiCurve {
        distances: Vec::with_capacity(max_distance),
        mi_bits: Vec::with_capacity(max_distance),
        horizontal: Vec::with_capacity(max_distance),
        vertical: Vec::with_capacity(max_distance),
        joint_bits: bits,
        requantized: bits < b,
    };
    for d in 1..=max_distance {
        let h = estimate_mi(images, Lag::Horizontal(d), bits, false);
        let v = estimate_mi(images, Lag::Vertical(d), bits, false);
        curve.distances.push(d);
        curve.mi_bits.push(0.5 * (h.mi_bits + v.mi_bits));
        curve.horizontal.push(h);
        curve.vertical.push(v);
    }
    Ok(curve)
}

/// Comment line recording how samples were pooled.
pub fn csv_provenance(channels: usize, bit_depth: u8, images: usize, requantized: bool) -> String {
    format!(
        "# pooled_channels={channels} bit_depth={bit_depth} images={images} requantized={requantized}\n"
    )
}

/// `level,entropy_bits` rows.
pub fn entropy_profile_csv(rows: &[EntropyRow]) -> String {
    let mut s = String::from("level,entropy_bits\n");
    for r in rows {
        writeln!(s, "{},{:.6}", r.label, r.entropy_bits).unwrap();
    }
    s
}

/// `distance,mi_bits` rows, or `distance,mi_bits,axis` with per-axis rows
/// (`mean`, `horizontal`, `vertical`) when `per_axis` is set.
pub fn mi_curve_csv(curve: &MiCurve, per_axis: bool) -> String {
    let mut s = String::new();
    if per_axis {
        s.push_str("distance,mi_bits,axis\n");
        for (i, d) in curve.distances.iter().enumerate() {
            writeln!(s, "{d},{:.6},mean", curve.mi_bits[i]).unwrap();
            writeln!(s, "{d},{:.6},horizontal", curve.horizontal[i].mi_bits).unwrap();
            writeln!(s, "{d},{:.6},vertical", curve.vertical[i].mi_bits).unwrap();
        }
    } else {
        s.push_str("distance,mi_bits\n");
        for (d, mi) in curve.distances.iter().zip(&curve.mi_bits) {
            writeln!(s, "{d},{mi:.6}").unwrap();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(seed: u64, shape: Shape, b: u8) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max = 1u32 << b;
        Image::from_shape(
            shape,
            b,
            (0..shape.samples())
                .map(|_| rng.random_range(0..max) as u16)
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_image_has_zero_entropy() {
        let img = Image::new(8, 8, 3, 8, vec![17; 192]).unwrap();
        assert_eq!(marginal_entropy(&[&img]).unwrap(), 0.0);
    }

    #[test]
    fn two_equiprobable_values_give_one_bit() {
        let samples = (0..64).map(|i| if i % 2 == 0 { 3 } else { 200 }).collect();
        let img = Image::new(8, 8, 1, 8, samples).unwrap();
        assert!((marginal_entropy(&[&img]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_noise_entropy_is_eight_bits() {
        let img = noise(5, Shape::new(1024, 1024, 1), 8);
        let h = marginal_entropy(&[&img]).unwrap();
        assert!((h - 8.0).abs() < 0.01, "{h}");
    }

    #[test]
    fn empty_and_mixed_collections_fail() {
        assert!(matches!(marginal_entropy(&[]), Err(Error::Domain(_))));
        let a = Image::zeros(Shape::new(2, 2, 1), 8).unwrap();
        let b = Image::zeros(Shape::new(2, 2, 1), 5).unwrap();
        assert!(matches!(marginal_entropy(&[&a, &b]), Err(Error::Domain(_))));
        assert!(matches!(
            Histogram::new(8).unwrap().entropy_bits(),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn entropy_is_permutation_invariant_and_bounded() {
        let img = noise(9, Shape::new(16, 16, 1), 5);
        let mut rev = img.samples().to_vec();
        rev.reverse();
        let img2 = Image::from_shape(img.shape(), 5, rev).unwrap();
        let h1 = marginal_entropy(&[&img]).unwrap();
        let h2 = marginal_entropy(&[&img2]).unwrap();
        assert_eq!(h1, h2);
        assert!((0.0..=5.0).contains(&h1));
    }

    #[test]
    fn profile_of_constant_images_is_all_zero() {
        let imgs = vec![Image::new(16, 16, 1, 8, vec![40; 256]).unwrap(); 3];
        let rows = pyramid_entropy_profile(&imgs, 4).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].label, "original");
        assert_eq!(rows[1].label, "F1");
        assert_eq!(rows[5].label, "coarsest");
        assert!(rows.iter().all(|r| r.entropy_bits == 0.0));
    }

    #[test]
    fn noise_profile_stays_near_full_entropy() {
        let imgs: Vec<Image> = (0..4)
            .map(|s| noise(s, Shape::new(256, 256, 1), 8))
            .collect();
        let rows = pyramid_entropy_profile(&imgs, 4).unwrap();
        for r in &rows[..5] {
            assert!((r.entropy_bits - 8.0).abs() < 0.02, "{r:?}");
        }
    }

    #[test]
    fn noise_has_no_mutual_information() {
        // plug-in bias is about 65k / (2 N ln2); 6M pairs keeps it near 0.008
        let imgs: Vec<Image> = (0..24)
            .map(|s| noise(100 + s, Shape::new(512, 512, 1), 8))
            .collect();
        let refs: Vec<&Image> = imgs.iter().collect();
        let curve = mutual_information_curve(&refs, 4, None).unwrap();
        for &mi in &curve.mi_bits {
            assert!(mi < 0.02, "{mi}");
        }
    }

    #[test]
    fn identical_columns_carry_full_entropy_horizontally() {
        // every row is constant, so horizontal neighbours are equal
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (h, w) = (4096, 16);
        let mut samples = Vec::with_capacity(h * w);
        for _ in 0..h {
            let v = rng.random_range(0..16u16);
            samples.extend(std::iter::repeat_n(v, w));
        }
        let img = Image::new(w, h, 1, 4, samples).unwrap();
        let hx = marginal_entropy(&[&img]).unwrap();
        let curve = mutual_information_curve(&[&img], 3, None).unwrap();
        for est in &curve.horizontal {
            assert!((est.plugin_bits - hx).abs() < 1e-9);
            assert!((est.mi_bits - hx).abs() < 1e-9);
        }
    }

    #[test]
    fn mi_is_symmetric_in_offset_sign() {
        let img = noise(4, Shape::new(40, 40, 2), 6);
        for lag in [Lag::Horizontal(3), Lag::Vertical(5)] {
            let a = mutual_information_at(&[&img], lag, false).unwrap();
            let b = mutual_information_at(&[&img], lag, true).unwrap();
            assert!((a.plugin_bits - b.plugin_bits).abs() < 1e-12);
        }
    }

    #[test]
    fn mi_bounded_by_marginal_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // smooth-ish random walk rows give strong but imperfect dependence
        let (h, w) = (64, 64);
        let mut samples = Vec::with_capacity(h * w);
        for _ in 0..h {
            let mut v: i32 = rng.random_range(0..256);
            for _ in 0..w {
                v = (v + rng.random_range(-3..=3)).clamp(0, 255);
                samples.push(v as u16);
            }
        }
        let img = Image::new(w, h, 1, 8, samples).unwrap();
        let hx = marginal_entropy(&[&img]).unwrap();
        let curve = mutual_information_curve(&[&img], 8, None).unwrap();
        for est in curve.horizontal.iter().chain(&curve.vertical) {
            assert!(est.mi_bits <= hx + 0.02, "{est:?} vs {hx}");
        }
    }

    #[test]
    fn oversized_distance_is_rejected() {
        let img = Image::zeros(Shape::new(8, 16, 1), 8).unwrap();
        assert!(matches!(
            mutual_information_curve(&[&img], 8, None),
            Err(Error::Domain(_))
        ));
        assert!(mutual_information_curve(&[&img], 7, None).is_ok());
        assert!(matches!(
            mutual_information_curve(&[&img], 0, None),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn sixteen_bit_inputs_are_requantized() {
        let img = noise(1, Shape::new(32, 32, 1), 16);
        let curve = mutual_information_curve(&[&img], 2, None).unwrap();
        assert!(curve.requantized);
        assert_eq!(curve.joint_bits, 8);
    }

    #[test]
    fn histogram_merge_is_order_independent() {
        let a = noise(1, Shape::new(8, 8, 1), 4);
        let b = noise(2, Shape::new(8, 8, 1), 4);
        let mut ab = Histogram::from_image(&a);
        ab.merge(&Histogram::from_image(&b)).unwrap();
        let mut ba = Histogram::from_image(&b);
        ba.merge(&Histogram::from_image(&a)).unwrap();
        assert_eq!(ab, ba);
        assert_eq!(ab.total(), 128);
    }

    #[test]
    fn csv_layouts() {
        let rows = vec![
            EntropyRow {
                label: "original".into(),
                entropy_bits: 7.5,
            },
            EntropyRow {
                label: "F1".into(),
                entropy_bits: 4.25,
            },
        ];
        assert_eq!(
            entropy_profile_csv(&rows),
            "level,entropy_bits\noriginal,7.500000\nF1,4.250000\n"
        );
        let img = noise(3, Shape::new(8, 8, 1), 8);
        let curve = mutual_information_curve(&[&img], 2, None).unwrap();
        let csv = mi_curve_csv(&curve, false);
        assert!(csv.starts_with("distance,mi_bits\n1,"));
        assert_eq!(csv.lines().count(), 3);
        let verbose = mi_curve_csv(&curve, true);
        assert_eq!(verbose.lines().count(), 7);
        assert!(verbose.lines().nth(2).unwrap().ends_with(",horizontal"));
    }
}
