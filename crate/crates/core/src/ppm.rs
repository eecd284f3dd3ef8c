//! Binary PNM (P5 grayscale, P6 RGB) reading and writing.
//!
//! `maxval` may be anything in `1..=65535`; the image bit depth is the
//! number of bits needed to hold it, so `maxval = 31` is a 5-bit image.
//! Samples wider than 8 bits are two bytes, big-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{bytes_per_sample, Image, Shape};

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.data.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.data.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(format!("PNM header: expected {what}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(format!("PNM header: {what} out of range")))
    }
}

/// Number of bits needed to represent `maxval`.
pub fn bit_depth_for_maxval(maxval: u32) -> u8 {
    (32 - maxval.leading_zeros()) as u8
}

/// Parses a P5 or P6 file held in memory.
pub fn decode_ppm(data: &[u8]) -> Result<Image> {
    let channels = match data.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::format("not a binary PNM file (expected P5 or P6)")),
    };
    let mut cur = Cursor { data, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(format!(
            "PNM header: empty {width}x{height} image"
        )));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(format!(
            "PNM header: maxval {maxval} outside 1..=65535"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    if !data.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format("PNM header: missing separator before raster"));
    }
    cur.pos += 1;
    let bit_depth = bit_depth_for_maxval(maxval as u32);
    let shape = Shape::new(height, width, channels);
    let per = bytes_per_sample(bit_depth);
    let need = shape
        .samples()
        .checked_mul(per)
        .ok_or_else(|| Error::format("PNM header: image too large"))?;
    let raster = &data[cur.pos..];
    if raster.len() < need {
        return Err(Error::format(format!(
            "PNM raster truncated: {} of {need} bytes",
            raster.len()
        )));
    }
    let img = Image::from_raw_bytes(shape, bit_depth, &raster[..need])?;
    if let Some(&s) = img.samples().iter().find(|&&s| usize::from(s) > maxval) {
        return Err(Error::format(format!(
            "PNM sample {s} exceeds maxval {maxval}"
        )));
    }
    Ok(img)
}

/// Serializes a 1- or 3-channel image with `maxval = 2^b - 1`.
pub fn encode_ppm(img: &Image) -> Result<Vec<u8>> {
    let magic = match img.channels() {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(Error::format(format!(
                "PNM holds 1 or 3 channels, image has {c}"
            )))
        }
    };
    let mut out = format!(
        "{magic}\n{} {}\n{}\n",
        img.width(),
        img.height(),
        img.max_value()
    )
    .into_bytes();
    out.extend_from_slice(&img.raw_bytes());
    Ok(out)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Image> {
    decode_ppm(&fs::read(path)?)
}

pub fn write_ppm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    fs::write(path, encode_ppm(img)?)?;
    Ok(())
}

#[cfg(feature = "png")]
fn decode_png(data: &[u8]) -> Result<Image> {
    use png::{ColorType, Transformations};
    let mut decoder = png::Decoder::new(std::io::Cursor::new(data));
    decoder.set_transformations(Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(format!("PNG: {e}")))?;
    let mut buf = vec![
        0;
        reader
            .output_buffer_size()
            .ok_or_else(|| Error::format("PNG: image too large"))?
    ];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(format!("PNG: {e}")))?;
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::Rgb => 3,
        other => {
            return Err(Error::format(format!(
                "PNG color type {other:?} unsupported (grayscale or RGB only)"
            )))
        }
    };
    let bit_depth = match info.bit_depth {
        png::BitDepth::Sixteen => 16,
        _ => 8,
    };
    let shape = Shape::new(info.height as usize, info.width as usize, channels);
    let need = shape.samples() * bytes_per_sample(bit_depth);
    Image::from_raw_bytes(shape, bit_depth, &buf[..need])
}

#[cfg(feature = "png")]
fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let color = match img.channels() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => {
            return Err(Error::format(format!(
                "PNG output needs 1 or 3 channels, got {c}"
            )))
        }
    };
    if img.bit_depth() != 8 && img.bit_depth() != 16 {
        return Err(Error::format(format!(
            "PNG output needs 8- or 16-bit samples, got {}",
            img.bit_depth()
        )));
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(color);
        enc.set_depth(if img.bit_depth() == 8 {
            png::BitDepth::Eight
        } else {
            png::BitDepth::Sixteen
        });
        let mut w = enc
            .write_header()
            .map_err(|e| Error::format(format!("PNG: {e}")))?;
        w.write_image_data(&img.raw_bytes())
            .map_err(|e| Error::format(format!("PNG: {e}")))?;
    }
    Ok(out)
}

fn is_png_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Reads a PNM file, or a PNG file when built with the `png` feature.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let data = fs::read(path.as_ref())?;
    if data.starts_with(b"\x89PNG") {
        #[cfg(feature = "png")]
        return decode_png(&data);
        #[cfg(not(feature = "png"))]
        return Err(Error::format("PNG input requires the `png` feature"));
    }
    decode_ppm(&data)
}

/// Writes PNM, or PNG for a `.png` path when built with the `png` feature.
pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    if is_png_path(path) {
        #[cfg(feature = "png")]
        {
            fs::write(path, encode_png(img)?)?;
            return Ok(());
        }
        #[cfg(not(feature = "png"))]
        return Err(Error::format("PNG output requires the `png` feature"));
    }
    write_ppm(path, img)
}
