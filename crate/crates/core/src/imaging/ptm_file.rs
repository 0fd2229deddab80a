//! `PTM_1.2` / `PTM_FORMAT_RGB` files.
//!
//! Layout:
//!
//! ```text
//! PTM_1.2\n
//! PTM_FORMAT_RGB\n
//! <width>\n
//! <height>\n
//! <scale0> … <scale5>\n
//! <bias0> … <bias5>\n
//! <width·height·6·3 coefficient bytes>
//! ```
//!
//! The body holds one plane per color channel (R, G, B); within a plane,
//! rows run bottom to top and each pixel stores its six coefficient bytes
//! in order. A coefficient decodes as `(byte - bias[k]) * scale[k]`.

use std::fmt::Write as _;

use super::ptm::{PtmImage, PtmMode};
use super::ImagingError;

const MAGIC: &str = "PTM_1.2";
const FORMAT_RGB: &str = "PTM_FORMAT_RGB";

/// Per-coefficient dequantization parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtmQuantization {
    pub scale: [f64; 6],
    pub bias: [f64; 6],
}

impl PtmQuantization {
    /// Range-fitting quantization with integer biases. Every value lands in
    /// 0..=255 and decodes within half a step of its original.
    pub fn fit(coefficients: &[[f64; 6]]) -> PtmQuantization {
        let mut scale = [1.0; 6];
        let mut bias = [0.0; 6];
        for k in 0..6 {
            let (lo, hi) = coefficients.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| {
                (lo.min(a[k]), hi.max(a[k]))
            });
            let s = if hi > lo {
                (hi - lo) / 254.0
            } else {
                (lo.abs() / 127.0).max(1e-30)
            };
            scale[k] = s;
            bias[k] = (-lo / s).ceil();
        }
        PtmQuantization { scale, bias }
    }

    pub fn encode(&self, k: usize, value: f64) -> u8 {
        (value / self.scale[k] + self.bias[k]).round().clamp(0.0, 255.0) as u8
    }

    pub fn decode(&self, k: usize, byte: u8) -> f64 {
        (byte as f64 - self.bias[k]) * self.scale[k]
    }
}

fn parse_err(msg: impl Into<String>) -> ImagingError {
    ImagingError::Parse(msg.into())
}

/// Reads a `PTM_FORMAT_RGB` file. Returns the image and the quantization
/// it was stored with.
pub fn ptm_parse(bytes: &[u8]) -> Result<(PtmImage, PtmQuantization), ImagingError> {
    let mut pos = 0usize;
    let read_line = |pos: &mut usize| -> Result<String, ImagingError> {
        let end = bytes[*pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| *pos + p)
            .ok_or_else(|| parse_err("truncated header"))?;
        let line = String::from_utf8_lossy(&bytes[*pos..end]).trim().to_string();
        *pos = end + 1;
        Ok(line)
    };

    let magic = read_line(&mut pos)?;
    if magic != MAGIC {
        return Err(ImagingError::UnsupportedFormat(format!(
            "PTM header {magic:?} (only {MAGIC} is supported)"
        )));
    }
    let format = read_line(&mut pos)?;
    if format != FORMAT_RGB {
        return Err(ImagingError::UnsupportedFormat(format!(
            "PTM format {format:?} (only {FORMAT_RGB} is supported)"
        )));
    }

    // width, height, 6 scales, 6 biases: whitespace separated.
    let mut tokens = Vec::with_capacity(14);
    while tokens.len() < 14 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err("truncated header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).to_string());
    }
    // Consume the rest of the bias line; the body starts after its newline.
    while pos < bytes.len() && matches!(bytes[pos], b' ' | b'\t' | b'\r') {
        pos += 1;
    }
    if bytes.get(pos) != Some(&b'\n') {
        return Err(parse_err("expected newline after bias values"));
    }
    pos += 1;

    let dim = |t: &str, what: &str| -> Result<u32, ImagingError> {
        t.parse::<u32>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| parse_err(format!("invalid {what} {t:?}")))
    };
    let width = dim(&tokens[0], "width")?;
    let height = dim(&tokens[1], "height")?;
    let mut scale = [0.0; 6];
    let mut bias = [0.0; 6];
    for k in 0..6 {
        scale[k] = tokens[2 + k]
            .parse::<f64>()
            .ok()
            .filter(|s| *s > 0.0 && s.is_finite())
            .ok_or_else(|| parse_err(format!("scale {k} must be a positive number")))?;
        bias[k] = tokens[8 + k]
            .parse::<f64>()
            .ok()
            .filter(|b| b.is_finite())
            .ok_or_else(|| parse_err(format!("bias {k} is not a number")))?;
    }
    let q = PtmQuantization { scale, bias };

    let (w, h) = (width as usize, height as usize);
    let expected = w
        .checked_mul(h)
        .and_then(|p| p.checked_mul(18))
        .ok_or_else(|| parse_err("image too large"))?;
    let body = &bytes[pos..];
    if body.len() != expected {
        return Err(parse_err(format!(
            "coefficient data is {} bytes, expected {expected} for {width}x{height} RGB",
            body.len()
        )));
    }

    let mut coefficients = vec![[0.0f64; 6]; w * h * 3];
    for c in 0..3 {
        for file_row in 0..h {
            let y = h - 1 - file_row;
            for x in 0..w {
                let off = ((c * h + file_row) * w + x) * 6;
                let dst = &mut coefficients[(y * w + x) * 3 + c];
                for k in 0..6 {
                    dst[k] = q.decode(k, body[off + k]);
                }
            }
        }
    }
    let ptm = PtmImage::new(width, height, 3, PtmMode::PerChannel, coefficients)?;
    Ok((ptm, q))
}

/// Writes an RGB PTM, quantizing with `quantization` or, when `None`, a
/// range fit over the image's coefficients.
pub fn ptm_write(ptm: &PtmImage, quantization: Option<&PtmQuantization>) -> Result<Vec<u8>, ImagingError> {
    if ptm.channels() != 3 || !matches!(ptm.mode(), PtmMode::PerChannel) {
        return Err(ImagingError::UnsupportedFormat(
            "only per-channel RGB PTMs can be written".into(),
        ));
    }
    let q = quantization
        .copied()
        .unwrap_or_else(|| PtmQuantization::fit(ptm.coefficients()));

    let mut header = String::new();
    let _ = writeln!(header, "{MAGIC}\n{FORMAT_RGB}\n{}\n{}", ptm.width(), ptm.height());
    let scales: Vec<String> = q.scale.iter().map(|s| format!("{s:?}")).collect();
    let biases: Vec<String> = q
        .bias
        .iter()
        .map(|b| if b.fract() == 0.0 { format!("{}", *b as i64) } else { format!("{b:?}") })
        .collect();
    let _ = writeln!(header, "{}\n{}", scales.join(" "), biases.join(" "));

    let (w, h) = (ptm.width() as usize, ptm.height() as usize);
    let mut out = header.into_bytes();
    out.reserve(w * h * 18);
    for c in 0..3 {
        for y in (0..h).rev() {
            for x in 0..w {
                let a = &ptm.coefficients()[(y * w + x) * 3 + c];
                for k in 0..6 {
                    out.push(q.encode(k, a[k]));
                }
            }
        }
    }
    Ok(out)
}
