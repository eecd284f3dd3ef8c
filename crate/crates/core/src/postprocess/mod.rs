//! Removal of isolated outlier pixels: pixels that an isolation forest
//! flags in HSV space are replaced by their median-filtered values.

pub mod hsv;
pub mod iforest;
pub mod median;

use crate::error::{Error, Result};
use crate::image::Image;

pub use hsv::{hsv_to_rgb, rgb_to_hsv, Hsv};
pub use iforest::{anomaly_scores, isolation_forest, ForestConfig};
pub use median::{median_filter, DEFAULT_WINDOW};

/// Pixels flagged as outliers, row-major `height × width`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutlierMask {
    height: usize,
    width: usize,
    flags: Vec<bool>,
}

impl OutlierMask {
    pub fn new(height: usize, width: usize, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != height * width {
            return Err(Error::shape(format!(
                "{} flags for a {height}x{width} mask",
                flags.len()
            )));
        }
        Ok(OutlierMask {
            height,
            width,
            flags,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.flags[r * self.width + c]
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DespeckleConfig {
    /// Median window side, odd.
    pub window: usize,
    pub forest: ForestConfig,
    /// Odd window side for a local-contrast feature; 0 scores each pixel
    /// on its own HSV value only.
    pub neighborhood: usize,
}

impl Default for DespeckleConfig {
    fn default() -> Self {
        DespeckleConfig {
            window: DEFAULT_WINDOW,
            forest: ForestConfig::default(),
            neighborhood: 0,
        }
    }
}

fn hue_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(360.0 - d) / 180.0
}

/// Forest features: `(H/360, S, V)`, followed by the pixel's HSV distance
/// from its neighbourhood median when `neighborhood > 0`.
fn features(img: &Image, neighborhood: usize) -> Result<Vec<Vec<f64>>> {
    let own = rgb_to_hsv(img)?;
    let local = if neighborhood > 0 {
        Some(rgb_to_hsv(&median_filter(img, neighborhood)?)?)
    } else {
        None
    };
    Ok(own
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut f = vec![p.h / 360.0, p.s, p.v];
            if let Some(l) = &local {
                let q = l[i];
                f.extend([hue_gap(p.h, q.h), p.s - q.s, p.v - q.v]);
            }
            f
        })
        .collect())
}

/// Outlier mask of a 3-channel image.
pub fn outlier_mask(img: &Image, config: &DespeckleConfig) -> Result<OutlierMask> {
    let flags = isolation_forest(&features(img, config.neighborhood)?, &config.forest)?;
    OutlierMask::new(img.height(), img.width(), flags)
}

/// Result of [`despeckle`].
#[derive(Debug, Clone, PartialEq)]
pub struct Despeckled {
    pub image: Image,
    pub mask: OutlierMask,
    /// Pixels whose value actually changed.
    pub changed: usize,
}

/// Replaces the flagged pixels by the median of their `window × window`
/// neighbourhood; every other pixel is left untouched.
pub fn despeckle(img: &Image, config: &DespeckleConfig) -> Result<Despeckled> {
    median::check_window(config.window)?;
    let mask = outlier_mask(img, config)?;
    let mut out = img.clone();
    let mut buf = Vec::with_capacity(config.window * config.window);
    let mut changed = 0;
    for r in 0..img.height() {
        for c in 0..img.width() {
            if !mask.get(r, c) {
                continue;
            }
            let mut touched = false;
            for ch in 0..3 {
                let v = median::median_at(img, r, c, ch, config.window, &mut buf);
                touched |= v != img.get(r, c, ch);
                out.set(r, c, ch, v)?;
            }
            changed += usize::from(touched);
        }
    }
    Ok(Despeckled {
        image: out,
        mask,
        changed,
    })
}

/// Peak signal-to-noise ratio in dB; infinite for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if a.shape() != b.shape() || a.bit_depth() != b.bit_depth() {
        return Err(Error::shape(format!(
            "cannot compare {} at {} bits with {} at {} bits",
            a.shape(),
            a.bit_depth(),
            b.shape(),
            b.bit_depth()
        )));
    }
    let se: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum();
    let mse = se / a.samples().len() as f64;
    let peak = f64::from(a.max_value());
    Ok(10.0 * (peak * peak / mse).log10())
}
