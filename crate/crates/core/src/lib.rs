//! Lossless multi-scale image coding built on the Paired Pyramid
//! modulo-difference decomposition.
//!
//! The crate is organised bottom-up:
//!
//! - [`image`] holds the integer [`Image`] grid shared by everything else,
//!   with [`ppm`] and [`container`] as the on-disk formats.
//! - [`pyramid`] splits an image into fine (modulo-difference) components
//!   and a coarsest residue, and puts it back together bit-exactly.
//! - [`stats`] measures marginal entropy and pixel-distance mutual
//!   information of images and pyramid components.
//! - [`mixture`] is the discretized logistic mixture distribution used as
//!   a parametric per-pixel model.
//! - [`scan`] builds squeeze/raster coding orders and the critical-path
//!   step count of block-autoregressive decoding.
//! - [`codec`] drives an adaptive range coder over the pyramid to produce
//!   a self-describing compressed stream.
//! - [`postprocess`] removes isolated outlier pixels (HSV isolation forest
//!   plus median replacement).

pub mod codec;
pub mod container;
pub mod detmath;
pub mod error;
pub mod image;
pub mod mixture;
pub mod postprocess;
pub mod ppm;
pub mod pyramid;
pub mod scan;
pub mod stats;

pub use error::{Error, Result};
pub use image::{Axis, Image, Shape};
