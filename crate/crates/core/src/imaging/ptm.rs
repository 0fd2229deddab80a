//! Polynomial texture maps: per-pixel biquadratic luminance models
//!
//! `L(lu, lv) = a0·lu² + a1·lv² + a2·lu·lv + a3·lu + a4·lv + a5`
//!
//! fitted by least squares to a single-camera, multiple-light image stack.

use super::{ImagingError, TextureImage};
use nalgebra::{Matrix6, Vector6};
use crate::math::Vec3;
use crate::par;

/// Tikhonov damping added to the normal equations.
pub const PTM_DAMPING: f64 = 1e-10;

/// Relative eigenvalue threshold below which the light design is treated as
/// rank deficient.
const RANK_TOLERANCE: f64 = 1e-9;

/// How coefficient planes map to output color.
#[derive(Debug, Clone, PartialEq)]
pub enum PtmMode {
    /// One coefficient set per modeled channel.
    PerChannel,
    /// One luminance coefficient set scaling a fixed per-pixel RGB color.
    Lrgb { chroma: Vec<[f32; 3]> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PtmImage {
    width: u32,
    height: u32,
    channels: u8,
    mode: PtmMode,
    /// Pixel-major: index `(y * width + x) * channels + c`.
    coefficients: Vec<[f64; 6]>,
}

impl PtmImage {
    pub fn new(
        width: u32,
        height: u32,
        channels: u8,
        mode: PtmMode,
        coefficients: Vec<[f64; 6]>,
    ) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::Domain("PTM must be at least 1x1".into()));
        }
        let pixels = width as usize * height as usize;
        match &mode {
            PtmMode::PerChannel if !(1..=4).contains(&channels) => {
                return Err(ImagingError::Domain(format!("{channels} PTM channels")));
            }
            PtmMode::Lrgb { chroma } => {
                if channels != 1 || chroma.len() != pixels {
                    return Err(ImagingError::DimensionMismatch(
                        "LRGB PTM needs one luminance plane and one color per pixel".into(),
                    ));
                }
            }
            _ => {}
        }
        if coefficients.len() != pixels * channels as usize {
            return Err(ImagingError::DimensionMismatch(format!(
                "{} coefficient sets for {pixels} pixels x {channels} channels",
                coefficients.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            mode,
            coefficients,
        })
    }

    /// Every pixel and channel shares the same coefficients.
    pub fn uniform(width: u32, height: u32, channels: u8, a: [f64; 6]) -> Result<Self, ImagingError> {
        let n = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, PtmMode::PerChannel, vec![a; n])
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

    pub fn mode(&self) -> &PtmMode {
        &self.mode
    }

    pub fn coefficients(&self) -> &[[f64; 6]] {
        &self.coefficients
    }

    pub fn coefficient(&self, x: u32, y: u32, channel: u8) -> [f64; 6] {
        let i = (y as usize * self.width as usize + x as usize) * self.channels as usize
            + channel as usize;
        self.coefficients[i]
    }

    fn output_channels(&self) -> u8 {
        match self.mode {
            PtmMode::PerChannel => self.channels,
            PtmMode::Lrgb { .. } => 3,
        }
    }
}

/// The six basis terms at a light direction.
#[inline]
pub(crate) fn basis(lu: f64, lv: f64) -> [f64; 6] {
    [lu * lu, lv * lv, lu * lv, lu, lv, 1.0]
}

#[inline]
fn poly(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3] + a[4] * b[4] + a[5] * b[5]
}

/// Single-camera multiple-light capture: N images and their light directions.
#[derive(Debug, Clone)]
pub struct ScmlStack {
    images: Vec<TextureImage>,
    light_dirs: Vec<Vec3>,
}

impl ScmlStack {
    pub fn new(images: Vec<TextureImage>, light_dirs: Vec<Vec3>) -> Result<Self, ImagingError> {
        if images.len() != light_dirs.len() {
            return Err(ImagingError::DimensionMismatch(format!(
                "{} images but {} light directions",
                images.len(),
                light_dirs.len()
            )));
        }
        if images.len() < 6 {
            return Err(ImagingError::Domain(format!(
                "PTM fitting needs N >= 6 images (6 coefficients per pixel), got {}",
                images.len()
            )));
        }
        let first = &images[0];
        if let Some(i) = images
            .iter()
            .position(|im| !im.same_dims(first) || im.channels() != first.channels())
        {
            return Err(ImagingError::DimensionMismatch(format!(
                "image {i} differs in size or channel count from image 0"
            )));
        }
        for (i, l) in light_dirs.iter().enumerate() {
            if !l.is_finite() || (l.length() - 1.0).abs() > 1e-6 {
                return Err(ImagingError::Domain(format!(
                    "light direction {i} is not unit length"
                )));
            }
            if l.z < 0.0 {
                return Err(ImagingError::Domain(format!(
                    "light direction {i} points below the surface (lw < 0)"
                )));
            }
        }
        Ok(Self { images, light_dirs })
    }

    pub fn images(&self) -> &[TextureImage] {
        &self.images
    }

    pub fn light_dirs(&self) -> &[Vec3] {
        &self.light_dirs
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct PtmFit {
    pub ptm: PtmImage,
    /// Root-mean-square model residual for each input image, over all of its
    /// pixels and channels.
    pub residual_rms: Vec<f64>,
    /// Residual RMS over the whole stack.
    pub overall_rms: f64,
}

/// Least-squares fit of the biquadratic at every pixel and channel.
pub fn ptm_fit(stack: &ScmlStack) -> Result<PtmFit, ImagingError> {
    let design: Vec<[f64; 6]> = stack
        .light_dirs
        .iter()
        .map(|l| basis(l.x, l.y))
        .collect();

    let mut gram = Matrix6::<f64>::zeros();
    for row in &design {
        let b = Vector6::from_row_slice(row);
        gram += b * b.transpose();
    }
    let values = gram.symmetric_eigenvalues();
    let top = values.max().max(f64::MIN_POSITIVE);
    let rank = values.iter().filter(|&&v| v > RANK_TOLERANCE * top).count();
    if rank < 6 {
        return Err(ImagingError::RankDeficient(format!(
            "{} light directions span only rank {rank} of the 6 biquadratic terms \
             (collinear lights or lights on a common conic, e.g. a single elevation ring)",
            stack.len()
        )));
    }
    let chol = (gram + Matrix6::identity() * PTM_DAMPING)
        .cholesky()
        .ok_or_else(|| ImagingError::RankDeficient("normal equations are not positive definite".into()))?;

    let first = &stack.images[0];
    let (w, h, ch) = (first.width(), first.height(), first.channels());
    let row_len = w as usize * ch as usize;
    let mut coefficients = vec![[0.0f64; 6]; w as usize * h as usize * ch as usize];

    par::for_each_row(&mut coefficients, row_len, |y, row| {
        let base = y * row_len;
        for (k, out) in row.iter_mut().enumerate() {
            let mut rhs = [0.0f64; 6];
            // Fixed image order keeps the sum independent of scheduling.
            for (img, b) in stack.images.iter().zip(&design) {
                let l = img.data()[base + k] as f64;
                for j in 0..6 {
                    rhs[j] += b[j] * l;
                }
            }
            *out = chol.solve(&Vector6::from(rhs)).into();
        }
    });

    let n = stack.len();
    let partial = par::map_blocks(h as usize, 1, |rows| {
        let mut sums = vec![0.0f64; n];
        for y in rows {
            let base = y * row_len;
            for k in 0..row_len {
                let a = &coefficients[base + k];
                for (i, (img, b)) in stack.images.iter().zip(&design).enumerate() {
                    let r = poly(a, b) - img.data()[base + k] as f64;
                    sums[i] += r * r;
                }
            }
        }
        sums
    });
    let mut sums = vec![0.0f64; n];
    for p in partial {
        sums.iter_mut().zip(p).for_each(|(s, v)| *s += v);
    }
    let samples = (w as usize * h as usize * ch as usize) as f64;
    let residual_rms: Vec<f64> = sums.iter().map(|s| (s / samples).sqrt()).collect();
    let overall_rms = (sums.iter().sum::<f64>() / (samples * n as f64)).sqrt();

    Ok(PtmFit {
        ptm: PtmImage::new(w, h, ch, PtmMode::PerChannel, coefficients)?,
        residual_rms,
        overall_rms,
    })
}

fn check_light(light_dir: Vec3) -> Result<(), ImagingError> {
    if !light_dir.is_finite() || (light_dir.length() - 1.0).abs() > 1e-3 {
        return Err(ImagingError::Domain(format!(
            "light direction {:?} is not unit length",
            light_dir.to_array()
        )));
    }
    Ok(())
}

/// Evaluates the model without clamping.
pub fn ptm_eval_unclamped(ptm: &PtmImage, light_dir: Vec3) -> Result<TextureImage, ImagingError> {
    check_light(light_dir)?;
    let b = basis(light_dir.x, light_dir.y);
    let out_ch = ptm.output_channels() as usize;
    let w = ptm.width as usize;
    let mut data = vec![0.0f32; w * ptm.height as usize * out_ch];
    par::for_each_row(&mut data, w * out_ch, |y, row| {
        for x in 0..w {
            let p = y * w + x;
            match &ptm.mode {
                PtmMode::PerChannel => {
                    for c in 0..out_ch {
                        row[x * out_ch + c] = poly(&ptm.coefficients[p * out_ch + c], &b) as f32;
                    }
                }
                PtmMode::Lrgb { chroma } => {
                    let lum = poly(&ptm.coefficients[p], &b);
                    for c in 0..3 {
                        row[x * 3 + c] = (lum * chroma[p][c] as f64) as f32;
                    }
                }
            }
        }
    });
    TextureImage::new(ptm.width, ptm.height, out_ch as u8, data)
}

/// Relights the map from `light_dir` (unit, `lu`/`lv` are its x/y) and clamps
/// to [0, 1].
pub fn ptm_eval(ptm: &PtmImage, light_dir: Vec3) -> Result<TextureImage, ImagingError> {
    let img = ptm_eval_unclamped(ptm, light_dir)?;
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let data = img.into_data().into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    TextureImage::new(w, h, c, data)
}

/// Renders the unclamped model at each light, producing a fitting stack.
pub fn synthesize_stack(ptm: &PtmImage, light_dirs: &[Vec3]) -> Result<ScmlStack, ImagingError> {
    let images = light_dirs
        .iter()
        .map(|&l| ptm_eval_unclamped(ptm, l))
        .collect::<Result<Vec<_>, _>>()?;
    ScmlStack::new(images, light_dirs.to_vec())
}
