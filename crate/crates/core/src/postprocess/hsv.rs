//! Hexcone RGB/HSV conversion on integer images.

use crate::error::{Error, Result};
use crate::image::Image;

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hsv {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

/// Converts one pixel with components in `[0, 1]`.
pub fn rgb_to_hsv_pixel(r: f64, g: f64, b: f64) -> Hsv {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    // rem_euclid can land on 360 through rounding
    let h = if h >= 360.0 { 0.0 } else { h };
    Hsv { h, s, v: max }
}

/// Inverse of [`rgb_to_hsv_pixel`], components in `[0, 1]`.
pub fn hsv_to_rgb_pixel(p: Hsv) -> [f64; 3] {
    let c = p.v * p.s;
    let hp = p.h / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = p.v - c;
    [r + m, g + m, b + m]
}

fn require_rgb(img: &Image) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::domain(format!(
            "HSV needs 3 channels, image has {}",
            img.channels()
        )));
    }
    Ok(())
}

/// Row-major HSV triples of a 3-channel image.
pub fn rgb_to_hsv(img: &Image) -> Result<Vec<Hsv>> {
    require_rgb(img)?;
    let max = f64::from(img.max_value());
    Ok(img
        .samples()
        .chunks_exact(3)
        .map(|p| {
            rgb_to_hsv_pixel(
                f64::from(p[0]) / max,
                f64::from(p[1]) / max,
                f64::from(p[2]) / max,
            )
        })
        .collect())
}

/// Back to integers at `bit_depth`, rounding to nearest.
pub fn hsv_to_rgb(pixels: &[Hsv], height: usize, width: usize, bit_depth: u8) -> Result<Image> {
    if pixels.len() != height * width {
        return Err(Error::shape(format!(
            "{} pixels for a {height}x{width} image",
            pixels.len()
        )));
    }
    let max = f64::from((1u32 << bit_depth) - 1);
    let samples = pixels
        .iter()
        .flat_map(|&p| hsv_to_rgb_pixel(p))
        .map(|x| (x * max).round().clamp(0.0, max) as u16)
        .collect();
    Image::new(height, width, 3, bit_depth, samples)
}
