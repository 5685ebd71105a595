//! Wideband underwater image formation.
//!
//! For every pixel and channel `c`:
//!
//! ```text
//! I_c = J_c * exp(-beta_c * z) + veil_c * (1 - exp(-beta_c * z))
//! ```
//!
//! where `J` is the clean radiance and `z` the range along the camera ray.
//! The blend is applied to whatever values the [`LinearImage`] holds; with
//! [`FormationSpace::Linear`] (the default) those are linear-light radiances
//! decoded from sRGB.

use lut::{DECODE_LUT, ENCODE_THRESHOLDS};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::water_optics::WaterCoefficients;

/// Images at or above this many pixels are rendered with row parallelism.
const PARALLEL_PIXELS: usize = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormationError {
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfRangeInput { index: usize, value: f64 },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// H x W x 3 image, row-major, channels in R, G, B order.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl LinearImage {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self, FormationError> {
        if width == 0 || height == 0 {
            return Err(FormationError::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(FormationError::InvalidImage(format!(
                "expected {} pixels, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(LinearImage { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: [f64; 3]) -> Result<Self, FormationError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.data
    }

    pub fn into_pixels(self) -> Vec<[f64; 3]> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    /// Clamps every channel to [0, 1]. NaN maps to 0.
    pub fn clamp_unit(&mut self) {
        for px in &mut self.data {
            for v in px.iter_mut() {
                *v = clamp_unit(*v);
            }
        }
    }

    /// Copies the `w x h` window starting at (`x0`, `y0`).
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self, FormationError> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(FormationError::InvalidImage("crop window out of bounds".into()));
        }
        let data = (y0..y0 + h)
            .flat_map(|y| self.data[y * self.width + x0..y * self.width + x0 + w].iter().copied())
            .collect();
        Self::new(w, h, data)
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v >= 1.0 {
        1.0
    } else if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Per-pixel range or depth in meters. A value is a valid depth iff it is
/// finite and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, FormationError> {
        if width == 0 || height == 0 {
            return Err(FormationError::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(FormationError::InvalidImage(format!(
                "expected {} depth values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(DepthMap { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, FormationError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn is_valid_value(v: f64) -> bool {
        v.is_finite() && v > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| Self::is_valid_value(**v)).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, FormationError> {
        let k = CameraIntrinsics { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), FormationError> {
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return Err(FormationError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(FormationError::InvalidIntrinsics("principal point must be finite".into()));
        }
        Ok(())
    }
}

/// How the `z` values fed to the renderer should be interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthKind {
    /// Euclidean distance along the camera ray.
    #[default]
    Range,
    /// Camera-frame z coordinate; converted with [`planar_depth_to_range`].
    Planar,
}

/// Which pixel values the formation model is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormationSpace {
    /// Decode sRGB to linear light, render, re-encode.
    #[default]
    Linear,
    /// Render directly on the sRGB-encoded values.
    Srgb,
}

impl FormationSpace {
    /// Decodes packed 8-bit RGB into working values for this space.
    pub fn decode_rgb8(self, width: usize, height: usize, bytes: &[u8]) -> Result<LinearImage, FormationError> {
        if bytes.len() != width * height * 3 {
            return Err(FormationError::InvalidImage(format!(
                "expected {} bytes, got {}",
                width * height * 3,
                bytes.len()
            )));
        }
        let data = match self {
            FormationSpace::Linear => bytes
                .chunks_exact(3)
                .map(|p| [DECODE_LUT[p[0] as usize], DECODE_LUT[p[1] as usize], DECODE_LUT[p[2] as usize]])
                .collect(),
            FormationSpace::Srgb => bytes
                .chunks_exact(3)
                .map(|p| [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0])
                .collect(),
        };
        LinearImage::new(width, height, data)
    }

    /// Encodes working values back to packed 8-bit RGB. Values are clamped
    /// to [0, 1] first.
    pub fn encode_rgb8(self, img: &LinearImage) -> Vec<u8> {
        let mut out = Vec::with_capacity(img.data.len() * 3);
        match self {
            FormationSpace::Linear => {
                for px in &img.data {
                    out.extend(px.iter().map(|&v| quantize_linear_to_srgb8(v)));
                }
            }
            FormationSpace::Srgb => {
                for px in &img.data {
                    out.extend(px.iter().map(|&v| (clamp_unit(v) * 255.0).round() as u8));
                }
            }
        }
        out
    }
}

/// sRGB electro-optical transfer function (encoded -> linear).
#[inline]
pub fn srgb_eotf(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Inverse of [`srgb_eotf`] (linear -> encoded).
#[inline]
pub fn srgb_oetf(v: f64) -> f64 {
    if v <= 0.0031308 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

fn check_unit_range(img: &LinearImage) -> Result<(), FormationError> {
    for (i, px) in img.data.iter().enumerate() {
        for (c, &v) in px.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(FormationError::OutOfRangeInput {
                    index: i * 3 + c,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Decodes an sRGB-encoded image (values in [0, 1]) to linear light.
pub fn srgb_to_linear(img: &LinearImage) -> Result<LinearImage, FormationError> {
    check_unit_range(img)?;
    Ok(map_channels(img, srgb_eotf))
}

/// Encodes a linear-light image (values in [0, 1]) to sRGB.
pub fn linear_to_srgb(img: &LinearImage) -> Result<LinearImage, FormationError> {
    check_unit_range(img)?;
    Ok(map_channels(img, srgb_oetf))
}

fn map_channels(img: &LinearImage, f: impl Fn(f64) -> f64) -> LinearImage {
    LinearImage {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|px| [f(px[0]), f(px[1]), f(px[2])]).collect(),
    }
}

/// Quantizes a linear value to the nearest 8-bit sRGB code.
///
/// Uses the 255 decision levels `srgb_eotf((k + 0.5) / 255)` so no
/// transcendental function is evaluated per sample.
#[inline]
pub fn quantize_linear_to_srgb8(v: f64) -> u8 {
    // NaN and negatives land on code 0.
    ENCODE_THRESHOLDS.partition_point(|&t| t <= v) as u8
}

/// Applies the formation model, then clamps to [0, 1].
///
/// Pixels whose range is non-finite or negative take the `z -> inf` limit,
/// i.e. the veiling light. Zero range is the identity.
pub fn render_underwater(
    clean: &LinearImage,
    range: &DepthMap,
    coeffs: &WaterCoefficients,
) -> Result<LinearImage, FormationError> {
    render_impl::<true>(clean, range, coeffs)
}

/// [`render_underwater`] without the final clamp.
pub fn render_underwater_unclamped(
    clean: &LinearImage,
    range: &DepthMap,
    coeffs: &WaterCoefficients,
) -> Result<LinearImage, FormationError> {
    render_impl::<false>(clean, range, coeffs)
}

type RowChunks<'a> = (&'a mut [[f64; 3]], (&'a [[f64; 3]], &'a [f64]));

fn render_impl<const CLAMP: bool>(
    clean: &LinearImage,
    range: &DepthMap,
    coeffs: &WaterCoefficients,
) -> Result<LinearImage, FormationError> {
    if clean.dims() != range.dims() {
        return Err(FormationError::DimensionMismatch {
            left: clean.dims(),
            right: range.dims(),
        });
    }
    let neg_beta = coeffs.beta.map(|b| -b);
    let veil = coeffs.veil;
    let mut out = vec![[0.0; 3]; clean.data.len()];

    let render_rows = |(dst, (src, z)): RowChunks<'_>| {
        for ((o, j), &z) in dst.iter_mut().zip(src).zip(z) {
            *o = blend_pixel::<CLAMP>(*j, z, neg_beta, veil);
        }
    };

    let w = clean.width;
    if clean.data.len() >= PARALLEL_PIXELS {
        out.par_chunks_mut(w)
            .zip(clean.data.par_chunks(w).zip(range.data.par_chunks(w)))
            .for_each(render_rows);
    } else {
        out.chunks_mut(w)
            .zip(clean.data.chunks(w).zip(range.data.chunks(w)))
            .for_each(render_rows);
    }
    Ok(LinearImage {
        width: clean.width,
        height: clean.height,
        data: out,
    })
}

#[inline(always)]
fn blend_pixel<const CLAMP: bool>(j: [f64; 3], z: f64, neg_beta: [f64; 3], veil: [f64; 3]) -> [f64; 3] {
    if !(z.is_finite() && z >= 0.0) {
        return veil;
    }
    let mut o = [0.0; 3];
    for c in 0..3 {
        let t = (neg_beta[c] * z).exp();
        let v = j[c] * t + veil[c] * (1.0 - t);
        o[c] = if CLAMP { clamp_unit(v) } else { v };
    }
    o
}

/// Converts camera-frame z to Euclidean ray length using pixel centers.
/// Invalid inputs stay as they are.
pub fn planar_depth_to_range(depth: &DepthMap, k: &CameraIntrinsics) -> Result<DepthMap, FormationError> {
    k.validate()?;
    let w = depth.width;
    let inv_fx = 1.0 / k.fx;
    let inv_fy = 1.0 / k.fy;
    let col_sq: Vec<f64> = (0..w)
        .map(|u| {
            let a = (u as f64 + 0.5 - k.cx) * inv_fx;
            a * a
        })
        .collect();
    let mut data = depth.data.clone();
    for (v, row) in data.chunks_mut(w).enumerate() {
        let b = (v as f64 + 0.5 - k.cy) * inv_fy;
        let b2 = b * b;
        for (z, a2) in row.iter_mut().zip(&col_sq) {
            if DepthMap::is_valid_value(*z) {
                *z *= (1.0 + a2 + b2).sqrt();
            }
        }
    }
    Ok(DepthMap {
        width: depth.width,
        height: depth.height,
        data,
    })
}

mod lut {
    use std::sync::LazyLock;

    use super::srgb_eotf;

    pub(super) static DECODE_LUT: LazyLock<[f64; 256]> =
        LazyLock::new(|| std::array::from_fn(|k| srgb_eotf(k as f64 / 255.0)));

    pub(super) static ENCODE_THRESHOLDS: LazyLock<[f64; 255]> =
        LazyLock::new(|| std::array::from_fn(|k| srgb_eotf((k as f64 + 0.5) / 255.0)));
}
