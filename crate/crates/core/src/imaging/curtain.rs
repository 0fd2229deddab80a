//! Multi-texture curtain view.
//!
//! `k` frames are laid out side by side along one axis, separated by `k − 1`
//! boundaries spaced `1/k` apart. The whole set of boundaries is translated
//! so that boundary `⌊(k − 1)/2⌋` (zero-based) sits exactly under the pointer,
//! then each boundary is clamped to [0, 1]. A pixel whose center lies at or
//! past boundary `i` comes from frame `i + 1`.

use serde::{Deserialize, Serialize};

use super::{ImagingError, TextureImage};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurtainAxis {
    /// Regions run left to right, following the pointer's x.
    Horizontal,
    /// Regions run top to bottom, following the pointer's y.
    Vertical,
}

/// Normalized boundary positions for `k` frames.
pub fn curtain_boundaries(k: usize, pointer: f64) -> Vec<f64> {
    let anchor = (k.saturating_sub(1) / 2) as f64;
    (0..k.saturating_sub(1))
        .map(|i| (pointer + (i as f64 - anchor) / k as f64).clamp(0.0, 1.0))
        .collect()
}

pub fn curtain_composite(
    frames: &[TextureImage],
    pointer: (f64, f64),
    axis: CurtainAxis,
) -> Result<TextureImage, ImagingError> {
    if frames.len() < 2 {
        return Err(ImagingError::Domain(format!(
            "curtain view needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let first = &frames[0];
    if let Some(i) = frames
        .iter()
        .position(|f| !f.same_dims(first) || f.channels() != first.channels())
    {
        return Err(ImagingError::DimensionMismatch(format!(
            "frame {i} differs in size or channels from frame 0"
        )));
    }
    let p = match axis {
        CurtainAxis::Horizontal => pointer.0,
        CurtainAxis::Vertical => pointer.1,
    };
    if !p.is_finite() {
        return Err(ImagingError::Domain("pointer is not finite".into()));
    }
    let bounds = curtain_boundaries(frames.len(), p.clamp(0.0, 1.0));
    let (w, h, ch) = (first.width() as usize, first.height() as usize, first.channels() as usize);
    let extent = match axis {
        CurtainAxis::Horizontal => w,
        CurtainAxis::Vertical => h,
    } as f64;
    let frame_at = |i: usize| {
        let u = (i as f64 + 0.5) / extent;
        bounds.iter().filter(|&&b| b <= u).count()
    };

    let mut out = vec![0.0f32; w * h * ch];
    par::for_each_row(&mut out, w * ch, |y, row| {
        for x in 0..w {
            let f = match axis {
                CurtainAxis::Horizontal => frame_at(x),
                CurtainAxis::Vertical => frame_at(y),
            };
            let src = &frames[f].data()[(y * w + x) * ch..(y * w + x + 1) * ch];
            row[x * ch..(x + 1) * ch].copy_from_slice(src);
        }
    });
    TextureImage::new(first.width(), first.height(), first.channels(), out)
}
