//! Paired Pyramid decomposition.
//!
//! Each step pairs adjacent rows (or columns), keeps the even-indexed
//! member unchanged as the coarse component and replaces the odd-indexed
//! member by its modulo-`2^b` difference to the kept one. Steps alternate
//! rows, columns, rows, ... so after `L` steps the coarsest residue has
//! `height / 2^ceil(L/2)` rows and `width / 2^floor(L/2)` columns.
//!
//! Channels are transformed independently. All arithmetic is exact and
//! the transform is its own lossless inverse up to [`invert_pyramid`].

use crate::error::{Error, Result};
use crate::image::{check_bit_depth, Axis, Image, Shape};

/// Extent the automatic level count aims for on both axes.
pub const AUTO_COARSEST_EXTENT: usize = 4;

fn check_sample(v: u32, bit_depth: u8, what: &str) -> Result<()> {
    if v >> bit_depth != 0 {
        return Err(Error::domain(format!(
            "{what} {v} outside [0, {}] for bit depth {bit_depth}",
            (1u32 << bit_depth) - 1
        )));
    }
    Ok(())
}

/// `(x - y) mod 2^b`.
pub fn mod_diff(x: u32, y: u32, bit_depth: u8) -> Result<u32> {
    check_bit_depth(bit_depth)?;
    check_sample(x, bit_depth, "minuend")?;
    check_sample(y, bit_depth, "subtrahend")?;
    let k = 1u32 << bit_depth;
    Ok(if x >= y { x - y } else { k - (y - x) })
}

/// `(f + y) mod 2^b`, the inverse of [`mod_diff`] in its first argument.
pub fn mod_add(f: u32, y: u32, bit_depth: u8) -> Result<u32> {
    check_bit_depth(bit_depth)?;
    check_sample(f, bit_depth, "fine sample")?;
    check_sample(y, bit_depth, "coarse sample")?;
    Ok((f + y) & ((1u32 << bit_depth) - 1))
}

#[inline]
fn diff_masked(x: u16, y: u16, mask: u16) -> u16 {
    x.wrapping_sub(y) & mask
}

#[inline]
fn add_masked(f: u16, y: u16, mask: u16) -> u16 {
    f.wrapping_add(y) & mask
}

fn mask_for(bit_depth: u8) -> u16 {
    ((1u32 << bit_depth) - 1) as u16
}

/// Separates the even-indexed (retained) and odd-indexed (removed) rows or
/// columns of `img`. Both halves keep the original values.
pub fn split_pairs(img: &Image, axis: Axis) -> Result<(Image, Image)> {
    let shape = img.shape();
    let half = shape.halved(axis).ok_or_else(|| {
        Error::shape(format!(
            "cannot pair {axis} of a {shape} image: extent {} is odd",
            shape.extent(axis)
        ))
    })?;
    let mut kept = Vec::with_capacity(half.samples());
    let mut removed = Vec::with_capacity(half.samples());
    match axis {
        Axis::Rows => {
            for r in (0..shape.height).step_by(2) {
                kept.extend_from_slice(img.row(r));
                removed.extend_from_slice(img.row(r + 1));
            }
        }
        Axis::Cols => {
            let c = shape.channels;
            for r in 0..shape.height {
                for pair in img.row(r).chunks_exact(2 * c) {
                    kept.extend_from_slice(&pair[..c]);
                    removed.extend_from_slice(&pair[c..]);
                }
            }
        }
    }
    let b = img.bit_depth();
    Ok((
        Image::from_parts_unchecked(half, b, kept),
        Image::from_parts_unchecked(half, b, removed),
    ))
}

/// Re-interleaves retained and removed halves produced by [`split_pairs`].
pub fn merge_pairs(kept: &Image, removed: &Image, axis: Axis) -> Result<Image> {
    if kept.shape() != removed.shape() || kept.bit_depth() != removed.bit_depth() {
        return Err(Error::shape(format!(
            "pair halves disagree: {} at {} bits vs {} at {} bits",
            kept.shape(),
            kept.bit_depth(),
            removed.shape(),
            removed.bit_depth()
        )));
    }
    let half = kept.shape();
    let full = match axis {
        Axis::Rows => Shape::new(half.height * 2, half.width, half.channels),
        Axis::Cols => Shape::new(half.height, half.width * 2, half.channels),
    };
    let mut out = Vec::with_capacity(full.samples());
    match axis {
        Axis::Rows => {
            for r in 0..half.height {
                out.extend_from_slice(kept.row(r));
                out.extend_from_slice(removed.row(r));
            }
        }
        Axis::Cols => {
            let c = half.channels;
            for r in 0..half.height {
                for (k, m) in kept
                    .row(r)
                    .chunks_exact(c)
                    .zip(removed.row(r).chunks_exact(c))
                {
                    out.extend_from_slice(k);
                    out.extend_from_slice(m);
                }
            }
        }
    }
    Ok(Image::from_parts_unchecked(full, kept.bit_depth(), out))
}

/// Element-wise `(removed - kept) mod 2^b`.
pub fn fine_component(removed: &Image, kept: &Image) -> Result<Image> {
    if kept.shape() != removed.shape() || kept.bit_depth() != removed.bit_depth() {
        return Err(Error::shape("fine component operands disagree in shape"));
    }
    let mask = mask_for(kept.bit_depth());
    let samples = removed
        .samples()
        .iter()
        .zip(kept.samples())
        .map(|(&x, &y)| diff_masked(x, y, mask))
        .collect();
    Ok(Image::from_parts_unchecked(
        kept.shape(),
        kept.bit_depth(),
        samples,
    ))
}

/// Element-wise `(fine + kept) mod 2^b`, recovering the removed half.
pub fn removed_component(fine: &Image, kept: &Image) -> Result<Image> {
    if kept.shape() != fine.shape() || kept.bit_depth() != fine.bit_depth() {
        return Err(Error::shape(format!(
            "coarse {} and fine {} components disagree",
            kept.shape(),
            fine.shape()
        )));
    }
    let mask = mask_for(kept.bit_depth());
    let samples = fine
        .samples()
        .iter()
        .zip(kept.samples())
        .map(|(&f, &y)| add_masked(f, y, mask))
        .collect();
    Ok(Image::from_parts_unchecked(
        kept.shape(),
        kept.bit_depth(),
        samples,
    ))
}

/// One pyramid step: returns `(coarse, fine)`.
pub fn decompose_step(img: &Image, axis: Axis) -> Result<(Image, Image)> {
    let (kept, removed) = split_pairs(img, axis)?;
    let fine = fine_component(&removed, &kept)?;
    Ok((kept, fine))
}

/// Inverse of [`decompose_step`].
pub fn reconstruct_step(coarse: &Image, fine: &Image, axis: Axis) -> Result<Image> {
    let removed = removed_component(fine, coarse)?;
    merge_pairs(coarse, &removed, axis)
}

/// One level of a [`PairedPyramid`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PyramidLevel {
    /// 1-based level index.
    pub index: usize,
    pub axis: Axis,
    /// Modulo-difference component `F_i`.
    pub fine: Image,
    /// Shape of the coarse component produced at this level.
    pub coarse_shape: Shape,
}

/// Fine components `F_1..F_L` plus the coarsest residue `I_L`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedPyramid {
    pub levels: Vec<PyramidLevel>,
    pub coarsest: Image,
    pub original_shape: Shape,
    pub bit_depth: u8,
}

impl PairedPyramid {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    /// Total samples over all components; equals the original sample count.
    pub fn total_samples(&self) -> usize {
        self.levels
            .iter()
            .map(|l| l.fine.samples().len())
            .sum::<usize>()
            + self.coarsest.samples().len()
    }
}

/// Shapes of `I_0, I_1, ..., I_L`, or a shape error naming the level whose
/// extent is odd.
pub fn level_shapes(shape: Shape, levels: usize) -> Result<Vec<Shape>> {
    let mut shapes = Vec::with_capacity(levels + 1);
    shapes.push(shape);
    let mut cur = shape;
    for i in 1..=levels {
        let axis = Axis::for_level(i);
        cur = cur.halved(axis).ok_or_else(|| {
            Error::shape(format!(
                "level {i}: {axis} extent {} of {cur} is odd",
                cur.extent(axis)
            ))
        })?;
        shapes.push(cur);
    }
    Ok(shapes)
}

/// Largest level count that keeps both extents at or above
/// [`AUTO_COARSEST_EXTENT`] while every step divides evenly. A square
/// power-of-two image of side `N` gets `2·log2(N/4)` levels.
pub fn auto_levels(height: usize, width: usize) -> usize {
    let mut cur = Shape::new(height, width, 1);
    let mut levels = 0;
    loop {
        let axis = Axis::for_level(levels + 1);
        let e = cur.extent(axis);
        if !e.is_multiple_of(2) || e / 2 < AUTO_COARSEST_EXTENT {
            return levels;
        }
        cur = cur.halved(axis).expect("even extent");
        levels += 1;
    }
}

/// Decomposes `img` into `levels` alternating-axis steps, starting with rows.
pub fn build_pyramid(img: &Image, levels: usize) -> Result<PairedPyramid> {
    level_shapes(img.shape(), levels)?;
    let mut out = Vec::with_capacity(levels);
    let mut coarse = img.clone();
    for index in 1..=levels {
        let axis = Axis::for_level(index);
        let (next, fine) = decompose_step(&coarse, axis)?;
        out.push(PyramidLevel {
            index,
            axis,
            fine,
            coarse_shape: next.shape(),
        });
        coarse = next;
    }
    Ok(PairedPyramid {
        levels: out,
        coarsest: coarse,
        original_shape: img.shape(),
        bit_depth: img.bit_depth(),
    })
}

/// Reconstructs the original image from a pyramid, bit-exactly.
pub fn invert_pyramid(pyr: &PairedPyramid) -> Result<Image> {
    let shapes = level_shapes(pyr.original_shape, pyr.levels.len())?;
    if pyr.coarsest.shape() != shapes[pyr.levels.len()] || pyr.coarsest.bit_depth() != pyr.bit_depth
    {
        return Err(Error::shape(format!(
            "coarsest component {} does not match expected {}",
            pyr.coarsest.shape(),
            shapes[pyr.levels.len()]
        )));
    }
    let mut img = pyr.coarsest.clone();
    for level in pyr.levels.iter().rev() {
        let i = level.index;
        if i == 0 || i > pyr.levels.len() || pyr.levels[i - 1].index != i {
            return Err(Error::shape(format!("level index {i} out of sequence")));
        }
        if level.axis != Axis::for_level(i)
            || level.fine.shape() != shapes[i]
            || level.coarse_shape != shapes[i]
            || level.fine.bit_depth() != pyr.bit_depth
        {
            return Err(Error::shape(format!(
                "level {i}: fine component {} along {} inconsistent with expected {} along {}",
                level.fine.shape(),
                level.axis,
                shapes[i],
                Axis::for_level(i)
            )));
        }
        img = reconstruct_step(&img, &level.fine, level.axis)?;
    }
    Ok(img)
}
