//! Principal component analysis across co-registered spectral bands.
//!
//! Pixels are samples in band space. The N×N covariance is accumulated over
//! fixed pixel blocks and folded in block order, so results do not depend on
//! the thread count.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::AnalysisError;
use crate::imaging::TextureImage;
use crate::par;

const BLOCK: usize = 4096;

/// Below this fraction of the mean squared intensity the stack counts as flat.
const FLAT_RELATIVE: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq)]
pub struct MultispectralStack {
    bands: Vec<TextureImage>,
    labels: Vec<String>,
}

impl MultispectralStack {
    pub fn new(bands: Vec<TextureImage>, labels: Vec<String>) -> Result<Self, AnalysisError> {
        if bands.len() < 2 {
            return Err(AnalysisError::Domain(format!(
                "a multispectral stack needs at least 2 bands, got {}",
                bands.len()
            )));
        }
        if labels.len() != bands.len() {
            return Err(AnalysisError::Domain(format!(
                "{} labels for {} bands",
                labels.len(),
                bands.len()
            )));
        }
        for (i, b) in bands.iter().enumerate() {
            if b.channels() != 1 {
                return Err(AnalysisError::Domain(format!("band {i} has {} channels, expected 1", b.channels())));
            }
            if !b.same_dims(&bands[0]) {
                return Err(AnalysisError::Domain(format!("band {i} differs in size from band 0")));
            }
        }
        Ok(MultispectralStack { bands, labels })
    }

    pub fn bands(&self) -> &[TextureImage] {
        &self.bands
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn width(&self) -> u32 {
        self.bands[0].width()
    }

    pub fn height(&self) -> u32 {
        self.bands[0].height()
    }

    /// Band values of pixel `i` (row-major).
    pub fn sample(&self, i: usize) -> Vec<f64> {
        self.bands.iter().map(|b| b.data()[i] as f64).collect()
    }
}

/// Affine map from a raw projection to the stored texture value:
/// `texture = (projection - min) / (max - min)`, or 0.5 when `max == min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rescale {
    pub min: f64,
    pub max: f64,
}

impl Rescale {
    pub fn apply(&self, p: f64) -> f64 {
        if self.max > self.min {
            (p - self.min) / (self.max - self.min)
        } else {
            0.5
        }
    }

    /// Raw projection for a texture value (the inverse of `apply`).
    pub fn invert(&self, t: f64) -> f64 {
        self.min + t * (self.max - self.min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// Per-band mean that was subtracted before projecting.
    pub mean: Vec<f64>,
    /// Unit components, descending eigenvalue; the largest-magnitude entry
    /// of each is positive.
    pub components: Vec<Vec<f64>>,
    /// Covariance eigenvalues for the returned components.
    pub eigenvalues: Vec<f64>,
    /// `eigenvalue / trace`; all zero for a flat stack.
    pub explained_variance: Vec<f64>,
    pub rescale: Vec<Rescale>,
    pub textures: Vec<TextureImage>,
}

impl PcaResult {
    /// Raw (unscaled) projection of a band vector onto component `k`.
    pub fn project(&self, sample: &[f64], k: usize) -> f64 {
        sample
            .iter()
            .zip(&self.mean)
            .zip(&self.components[k])
            .map(|((x, m), c)| (x - m) * c)
            .sum()
    }
}

/// Reduces the stack to its top `k` principal components.
pub fn pca_bands(stack: &MultispectralStack, k: usize) -> Result<PcaResult, AnalysisError> {
    let n = stack.band_count();
    if k == 0 || k > n {
        return Err(AnalysisError::Domain(format!("k = {k} must be in 1..={n}")));
    }
    let pixels = stack.bands[0].pixel_count();
    let data: Vec<&[f32]> = stack.bands.iter().map(|b| b.data()).collect();

    let sums = par::map_blocks(pixels, BLOCK, |r| {
        let mut s = vec![0.0f64; n];
        for i in r {
            for (b, band) in data.iter().enumerate() {
                s[b] += band[i] as f64;
            }
        }
        s
    });
    let mean: Vec<f64> = (0..n)
        .map(|b| sums.iter().map(|s| s[b]).sum::<f64>() / pixels as f64)
        .collect();

    let partial = par::map_blocks(pixels, BLOCK, |r| {
        let mut c = vec![0.0f64; n * n];
        let mut x = vec![0.0f64; n];
        for i in r {
            for b in 0..n {
                x[b] = data[b][i] as f64 - mean[b];
            }
            for a in 0..n {
                for b in a..n {
                    c[a * n + b] += x[a] * x[b];
                }
            }
        }
        c
    });
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v = partial.iter().map(|c| c[a * n + b]).sum::<f64>() / pixels as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let trace = cov.trace();
    let scale = mean.iter().map(|m| m * m).sum::<f64>().max(1.0);
    let flat = !(trace > FLAT_RELATIVE * scale);

    let eig = SymmetricEigen::new(cov);
    // Descending eigenvalue; ties keep solver order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for &idx in &order[..k] {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        eigenvalues.push(eig.eigenvalues[idx].max(0.0));
    }
    let explained_variance = if flat {
        vec![0.0; k]
    } else {
        eigenvalues.iter().map(|l| l / trace).collect()
    };

    let mut result = PcaResult {
        mean,
        components,
        eigenvalues,
        explained_variance,
        rescale: Vec::with_capacity(k),
        textures: Vec::with_capacity(k),
    };
    for c in 0..k {
        let proj: Vec<f64> = par::map_indices(pixels, |i| {
            if flat {
                return 0.0;
            }
            (0..n)
                .map(|b| (data[b][i] as f64 - result.mean[b]) * result.components[c][b])
                .sum()
        });
        let (min, max) = proj
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        let rescale = if flat { Rescale { min: 0.0, max: 0.0 } } else { Rescale { min, max } };
        let tex: Vec<f32> = proj.iter().map(|&p| rescale.apply(p) as f32).collect();
        result.textures.push(TextureImage::new(stack.width(), stack.height(), 1, tex)?);
        result.rescale.push(rescale);
    }
    Ok(result)
}
