//! Eye-dome lighting: image-space shading from depth discontinuities.
//!
//! Each pixel collects `r = Σ max(0, d(p) − d(q))` over neighbors `q` at
//! `radius` pixels and is scaled by `exp(−strength · r · depth_scale)`.
//! Neighbors outside the image contribute nothing.

use super::{ImagingError, TextureImage};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdlNeighborhood {
    /// Left, right, up, down.
    Four,
    /// Four plus the diagonals (diagonal offsets are `radius` on each axis).
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdlConfig {
    pub neighborhood: EdlNeighborhood,
    /// Multiplier folded into the exponent.
    pub depth_scale: f64,
}

impl Default for EdlConfig {
    fn default() -> Self {
        EdlConfig {
            neighborhood: EdlNeighborhood::Four,
            depth_scale: 300.0,
        }
    }
}

const FOUR: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
const EIGHT: [(i64, i64); 8] = [
    (-1, 0),
    (1, 0),
    (0, -1),
    (0, 1),
    (-1, -1),
    (1, -1),
    (-1, 1),
    (1, 1),
];

/// Darkens `color` where the depth buffer steps away from the viewer.
/// Never brightens: the shade factor is at most 1.
pub fn edl_apply(
    color: &TextureImage,
    depth: &TextureImage,
    strength: f64,
    radius: u32,
    config: &EdlConfig,
) -> Result<TextureImage, ImagingError> {
    if !color.same_dims(depth) {
        return Err(ImagingError::DimensionMismatch(format!(
            "color is {}x{} but depth is {}x{}",
            color.width(),
            color.height(),
            depth.width(),
            depth.height()
        )));
    }
    if depth.channels() != 1 {
        return Err(ImagingError::Domain(format!(
            "depth must have 1 channel, got {}",
            depth.channels()
        )));
    }
    if !(strength >= 0.0 && strength.is_finite()) {
        return Err(ImagingError::Domain(format!("strength {strength} must be >= 0")));
    }
    if radius < 1 {
        return Err(ImagingError::Domain("radius must be at least 1 pixel".into()));
    }

    let (w, h) = (color.width() as i64, color.height() as i64);
    let ch = color.channels() as usize;
    let offsets: &[(i64, i64)] = match config.neighborhood {
        EdlNeighborhood::Four => &FOUR,
        EdlNeighborhood::Eight => &EIGHT,
    };
    let r = radius as i64;
    let d = depth.data();
    let src = color.data();

    let mut out = src.to_vec();
    par::for_each_row(&mut out, w as usize * ch, |y, row| {
        let y = y as i64;
        for x in 0..w {
            let dp = d[(y * w + x) as usize] as f64;
            let mut response = 0.0f64;
            for &(dx, dy) in offsets {
                let (qx, qy) = (x + dx * r, y + dy * r);
                if qx < 0 || qy < 0 || qx >= w || qy >= h {
                    continue;
                }
                let dq = d[(qy * w + qx) as usize] as f64;
                response += (dp - dq).max(0.0);
            }
            if response == 0.0 {
                continue;
            }
            let shade = (-strength * response * config.depth_scale).exp();
            let px = &mut row[x as usize * ch..(x as usize + 1) * ch];
            for v in px {
                *v = (*v as f64 * shade) as f32;
            }
        }
    });
    TextureImage::new(color.width(), color.height(), color.channels(), out)
}
