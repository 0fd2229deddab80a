//! File plumbing: PNG and mesh loading, atomic output, number formatting.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use anyhow::{bail, Context, Result};
use image::{DynamicImage, ImageFormat};
use relic_core::geometry::{parse_obj, parse_ply};
use relic_core::{Mesh, TextureImage};

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn tmp_sibling(path: &Path) -> Result<PathBuf> {
    let name = path
        .file_name()
        .with_context(|| format!("{} has no file name", path.display()))?;
    let tmp = format!(
        ".{}.tmp-{}-{}",
        name.to_string_lossy(),
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    );
    Ok(path.with_file_name(tmp))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = tmp_sibling(path)?;
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing {}", path.display()))
}

/// Replaces directory `dest` with the output of `fill`, which writes into
/// a fresh temporary directory. An existing `dest` is replaced only if it
/// is empty or `is_ours` accepts it.
pub fn replace_dir(dest: &Path, is_ours: impl Fn(&Path) -> bool, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    if dest.exists() {
        let empty = fs::read_dir(dest)
            .with_context(|| format!("reading {}", dest.display()))?
            .next()
            .is_none();
        if !empty && !is_ours(dest) {
            bail!("refusing to overwrite {}: it is not empty and not a previous output", dest.display());
        }
    }
    if let Some(parent) = dest.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let tmp = tmp_sibling(dest)?;
    if let Err(e) = fill(&tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if dest.exists() {
        let old = tmp_sibling(dest)?;
        fs::rename(dest, &old).with_context(|| format!("moving {} aside", dest.display()))?;
        fs::rename(&tmp, dest).with_context(|| format!("renaming into {}", dest.display()))?;
        let _ = fs::remove_dir_all(&old);
    } else {
        fs::rename(&tmp, dest).with_context(|| format!("renaming into {}", dest.display()))?;
    }
    Ok(())
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    let bytes = read(path)?;
    let mesh = match ext.as_str() {
        "obj" => parse_obj(&bytes),
        "ply" => parse_ply(&bytes),
        other => bail!("{}: unsupported mesh format {other:?}; expected .obj or .ply", path.display()),
    };
    mesh.with_context(|| format!("parsing {}", path.display()))
}

fn open_png(path: &Path) -> Result<DynamicImage> {
    image::load_from_memory_with_format(&read(path)?, ImageFormat::Png)
        .with_context(|| format!("decoding PNG {}", path.display()))
}

/// Loads a PNG keeping its color layout: gray stays 1 channel, RGBA keeps
/// alpha, everything else becomes RGB. Samples are 8-bit normalized.
pub fn load_color(path: &Path) -> Result<TextureImage> {
    let img = open_png(path)?;
    let (w, h) = (img.width(), img.height());
    let t = match img {
        DynamicImage::ImageLuma8(g) => TextureImage::from_u8(w, h, 1, g.as_raw()),
        DynamicImage::ImageRgba8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgba16(_) | DynamicImage::ImageLumaA16(_) => {
            TextureImage::from_u8(w, h, 4, img.to_rgba8().as_raw())
        }
        other => TextureImage::from_u8(w, h, 3, other.to_rgb8().as_raw()),
    };
    t.with_context(|| format!("loading {}", path.display()))
}

pub fn load_rgb(path: &Path) -> Result<TextureImage> {
    let img = open_png(path)?;
    TextureImage::from_u8(img.width(), img.height(), 3, img.to_rgb8().as_raw())
        .with_context(|| format!("loading {}", path.display()))
}

/// Single-channel image at 16-bit precision, normalized to [0, 1].
pub fn load_gray(path: &Path) -> Result<TextureImage> {
    let img = open_png(path)?.to_luma16();
    let data = img.as_raw().iter().map(|&v| v as f32 / 65535.0).collect();
    TextureImage::new(img.width(), img.height(), 1, data).with_context(|| format!("loading {}", path.display()))
}

/// PNG-encodes an image at 8 bits per sample.
pub fn encode_png(image: &TextureImage) -> Result<Vec<u8>> {
    let (w, h) = (image.width(), image.height());
    let bytes = image.to_u8();
    let dynamic = match image.channels() {
        1 => DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, bytes).expect("sized buffer")),
        2 => DynamicImage::ImageLumaA8(image::GrayAlphaImage::from_raw(w, h, bytes).expect("sized buffer")),
        3 => DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, bytes).expect("sized buffer")),
        4 => DynamicImage::ImageRgba8(image::RgbaImage::from_raw(w, h, bytes).expect("sized buffer")),
        n => bail!("cannot encode a {n}-channel image as PNG"),
    };
    let mut out = std::io::Cursor::new(Vec::new());
    dynamic.write_to(&mut out, ImageFormat::Png).context("encoding PNG")?;
    Ok(out.into_inner())
}

/// 16-bit grayscale PNG of a single-channel image.
pub fn encode_png16(image: &TextureImage) -> Result<Vec<u8>> {
    if image.channels() != 1 {
        bail!("16-bit output needs a single-channel image");
    }
    let data = image
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(image.width(), image.height(), data)
        .expect("sized buffer");
    let mut out = std::io::Cursor::new(Vec::new());
    DynamicImage::ImageLuma16(img)
        .write_to(&mut out, ImageFormat::Png)
        .context("encoding PNG")?;
    Ok(out.into_inner())
}

/// Formats with 9 significant digits in fixed notation.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.00000000".into();
    }
    let sci = format!("{x:.8e}");
    let exp: i32 = sci.split_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    let decimals = (8 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}
