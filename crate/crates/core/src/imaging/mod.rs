//! CPU reference implementations of the viewer's shading techniques.
//!
//! Everything here is a pure function over immutable images. The viewer's
//! GPU shaders are validated against these outputs.

mod chroma;
mod curtain;
mod edl;
mod ptm;
mod ptm_file;
mod render;
pub mod shader;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryError;
use crate::math::Vec3;

pub use chroma::chroma_key;
pub use curtain::{curtain_boundaries, curtain_composite, CurtainAxis};
pub use edl::{edl_apply, EdlConfig, EdlNeighborhood};
pub use ptm::{ptm_eval, ptm_eval_unclamped, ptm_fit, synthesize_stack, PtmFit, PtmImage, PtmMode, ScmlStack, PTM_DAMPING};
pub use ptm_file::{ptm_parse, ptm_write, PtmQuantization};
pub use render::{render_radiance, render_reference, Rendered};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImagingError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("light directions are rank deficient: {0}")]
    RankDeficient(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("PTM parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Row-major floating point image. Color samples live in [0, 1]; depth and
/// intermediate radiance images may exceed that range.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureImage {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<f32>,
}

impl TextureImage {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<f32>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::Domain(format!(
                "image dimensions {width}x{height} must be at least 1x1"
            )));
        }
        if !(1..=4).contains(&channels) {
            return Err(ImagingError::Domain(format!(
                "{channels} channels; expected 1 to 4"
            )));
        }
        let expect = width as usize * height as usize * channels as usize;
        if data.len() != expect {
            return Err(ImagingError::DimensionMismatch(format!(
                "{} samples for a {width}x{height}x{channels} image (expected {expect})",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: f32) -> Result<Self, ImagingError> {
        let n = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, vec![value; n])
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(
        width: u32,
        height: u32,
        channels: u8,
        f: impl Fn(u32, u32) -> Vec<f32>,
    ) -> Result<Self, ImagingError> {
        let mut data = Vec::with_capacity(width as usize * height as usize * channels as usize);
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                if px.len() != channels as usize {
                    return Err(ImagingError::DimensionMismatch(format!(
                        "pixel function returned {} channels, expected {channels}",
                        px.len()
                    )));
                }
                data.extend(px);
            }
        }
        Self::new(width, height, channels, data)
    }

    /// Decodes 8-bit samples (`v / 255`).
    pub fn from_u8(width: u32, height: u32, channels: u8, bytes: &[u8]) -> Result<Self, ImagingError> {
        Self::new(
            width,
            height,
            channels,
            bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        )
    }

    /// Encodes to 8-bit, clamping to [0, 1] and rounding to nearest.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize_u8(v)).collect()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn same_dims(&self, other: &TextureImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[f32] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &self.data[i..i + c]
    }

    pub fn sample(&self, x: u32, y: u32, channel: u8) -> f32 {
        self.pixel(x, y)[channel as usize]
    }

    /// Mean of all samples in channel order, summed in f64.
    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

pub(crate) fn quantize_u8(v: f32) -> u8 {
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Point light with linear RGB color.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointLight {
    pub position: Vec3,
    pub color: Vec3,
    pub intensity: f64,
}

impl PointLight {
    pub fn validate(&self) -> Result<(), ImagingError> {
        if !(self.intensity >= 0.0 && self.intensity.is_finite()) {
            return Err(ImagingError::Domain(format!(
                "light intensity {} must be finite and non-negative",
                self.intensity
            )));
        }
        if !self.position.is_finite() || !self.color.is_finite() {
            return Err(ImagingError::Domain("light is not finite".into()));
        }
        Ok(())
    }
}

/// The material-editing knobs exposed to users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub base_color: Vec3,
    pub normal_scale: f64,
    pub metalness: f64,
    pub roughness: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            base_color: Vec3::splat(1.0),
            normal_scale: 1.0,
            metalness: 0.0,
            roughness: 1.0,
        }
    }
}

impl MaterialParams {
    /// Copy with metalness and roughness clamped to [0, 1] and a
    /// non-negative normal scale.
    pub fn clamped(&self) -> MaterialParams {
        MaterialParams {
            base_color: self.base_color,
            normal_scale: self.normal_scale.max(0.0),
            metalness: self.metalness.clamp(0.0, 1.0),
            roughness: self.roughness.clamp(0.0, 1.0),
        }
    }
}
