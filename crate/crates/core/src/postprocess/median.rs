//! Per-channel median filter with edge replication.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

pub const DEFAULT_WINDOW: usize = 7;

pub(crate) fn check_window(m: usize) -> Result<()> {
    if m == 0 || m.is_multiple_of(2) {
        return Err(Error::domain(format!("median window must be odd, got {m}")));
    }
    Ok(())
}

/// Median of the `m×m` window around `(r, c)` in channel `ch`; `buf` is
/// scratch space.
pub(crate) fn median_at(
    img: &Image,
    r: usize,
    c: usize,
    ch: usize,
    m: usize,
    buf: &mut Vec<u16>,
) -> u16 {
    let half = (m / 2) as isize;
    let (h, w) = (img.height() as isize, img.width() as isize);
    buf.clear();
    for dr in -half..=half {
        let rr = (r as isize + dr).clamp(0, h - 1) as usize;
        for dc in -half..=half {
            let cc = (c as isize + dc).clamp(0, w - 1) as usize;
            buf.push(img.get(rr, cc, ch));
        }
    }
    let mid = buf.len() / 2;
    *buf.select_nth_unstable(mid).1
}

/// Every sample replaced by the median of its `m×m` window, rows and
/// columns beyond the border repeating the edge.
pub fn median_filter(img: &Image, m: usize) -> Result<Image> {
    check_window(m)?;
    let (w, ch) = (img.width(), img.channels());
    let mut out = vec![0u16; img.samples().len()];
    out.par_chunks_mut(w * ch).enumerate().for_each(|(r, row)| {
        let mut buf = Vec::with_capacity(m * m);
        for c in 0..w {
            for k in 0..ch {
                row[c * ch + k] = median_at(img, r, c, k, m, &mut buf);
            }
        }
    });
    Image::from_shape(img.shape(), img.bit_depth(), out)
}
