use super::{ImagingError, TextureImage};
use crate::math::Vec3;
use crate::par;

/// Blends pixels within `tolerance` (Euclidean RGB distance) of `key` toward
/// `replacement`: `out = (1 − ratio)·original + ratio·replacement`. A fourth
/// channel, if present, passes through untouched.
pub fn chroma_key(
    image: &TextureImage,
    key: Vec3,
    replacement: Vec3,
    tolerance: f64,
    ratio: f64,
) -> Result<TextureImage, ImagingError> {
    if image.channels() < 3 {
        return Err(ImagingError::Domain(format!(
            "chroma key needs an RGB image, got {} channels",
            image.channels()
        )));
    }
    if !(tolerance >= 0.0) {
        return Err(ImagingError::Domain(format!("tolerance {tolerance} must be >= 0")));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(ImagingError::Domain(format!("ratio {ratio} outside [0, 1]")));
    }
    let ch = image.channels() as usize;
    let repl = replacement.to_array();
    let mut out = image.data().to_vec();
    par::for_each_row(&mut out, image.width() as usize * ch, |_, row| {
        for px in row.chunks_exact_mut(ch) {
            let rgb = Vec3::new(px[0] as f64, px[1] as f64, px[2] as f64);
            if rgb.distance(key) > tolerance {
                continue;
            }
            for c in 0..3 {
                px[c] = ((1.0 - ratio) * px[c] as f64 + ratio * repl[c]) as f32;
            }
        }
    });
    TextureImage::new(image.width(), image.height(), image.channels(), out)
}
