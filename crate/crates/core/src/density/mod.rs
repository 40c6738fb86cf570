//! Ground-truth density maps from point annotations.
//!
//! Each annotated point contributes a 2-D Gaussian truncated to a
//! `(2⌈4σ⌉+1)²` window around the rounded point, clipped to the image and
//! renormalised over what remains, so every point carries exactly unit mass
//! even at the border. The Gaussian is evaluated at integer pixel
//! coordinates (pixel `j` sits at coordinate `j`).

mod io;
mod knn;

pub use io::{
    read_annotations, read_density_csv, write_annotations, write_density_csv, write_density_pgm,
    AnnotationFile,
};
pub use knn::knn_distances;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Head positions for one image, in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct PointAnnotations {
    pub points: Vec<(f64, f64)>,
    pub height: usize,
    pub width: usize,
}

impl PointAnnotations {
    pub fn new(points: Vec<(f64, f64)>, height: usize, width: usize) -> Result<Self> {
        let ann = PointAnnotations {
            points,
            height,
            width,
        };
        ann.validate()?;
        Ok(ann)
    }

    /// Every point must lie in `[0, w) × [0, h)`.
    pub fn validate(&self) -> Result<()> {
        for (i, &(x, y)) in self.points.iter().enumerate() {
            if !(x >= 0.0 && x < self.width as f64 && y >= 0.0 && y < self.height as f64) {
                return Err(Error::input(format!(
                    "point {i} at ({x}, {y}) is outside the {}x{} image",
                    self.width, self.height
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Non-negative grid whose sum is the object count. `scale_factor` is 1 for
/// full resolution and 4 after [`sum_pool_4`].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMap {
    pub height: usize,
    pub width: usize,
    pub scale_factor: usize,
    pub data: Vec<f64>,
}

impl DensityMap {
    pub fn zeros(height: usize, width: usize, scale_factor: usize) -> Self {
        DensityMap {
            height,
            width,
            scale_factor,
            data: vec![0.0; height * width],
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(v))
    }

    /// Copy out the `rows × cols` window at `(top, left)`, zero outside the map.
    pub fn crop(&self, top: usize, left: usize, rows: usize, cols: usize) -> DensityMap {
        let mut out = DensityMap::zeros(rows, cols, self.scale_factor);
        for r in 0..rows.min(self.height.saturating_sub(top)) {
            let src_row = &self.data[(top + r) * self.width..(top + r + 1) * self.width];
            let n = cols.min(self.width.saturating_sub(left));
            out.data[r * cols..r * cols + n].copy_from_slice(&src_row[left..left + n]);
        }
        out
    }

    /// As a `(1, 1, h, w)` tensor multiplied by `scale`.
    pub fn to_tensor(&self, scale: f64) -> Tensor4 {
        let data = self.data.iter().map(|&v| (v * scale) as f32).collect();
        Tensor4::new([1, 1, self.height, self.width], data).expect("density map dims are non-zero")
    }

    pub fn from_tensor_plane(
        t: &Tensor4,
        n: usize,
        scale_factor: usize,
        divide_by: f64,
    ) -> DensityMap {
        DensityMap {
            height: t.h(),
            width: t.w(),
            scale_factor,
            data: t
                .plane(n, 0)
                .iter()
                .map(|&v| v as f64 / divide_by)
                .collect(),
        }
    }
}

/// Kernel truncation radius in units of σ.
pub const TRUNCATE_SIGMAS: f64 = 4.0;

/// Settings for geometry-adaptive kernels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveKernel {
    pub k: usize,
    pub beta: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Used for every point when the image has fewer than two annotations.
    pub fallback_sigma: f64,
}

impl Default for AdaptiveKernel {
    fn default() -> Self {
        AdaptiveKernel {
            k: 5,
            beta: 0.3,
            sigma_min: 1.0,
            sigma_max: 25.0,
            fallback_sigma: 15.0,
        }
    }
}

fn splat(map: &mut DensityMap, x: f64, y: f64, sigma: f64) {
    let r = (TRUNCATE_SIGMAS * sigma).ceil() as i64;
    let (cx, cy) = (x.round() as i64, y.round() as i64);
    let x0 = (cx - r).max(0) as usize;
    let x1 = (cx + r).min(map.width as i64 - 1) as usize;
    let y0 = (cy - r).max(0) as usize;
    let y1 = (cy + r).min(map.height as i64 - 1) as usize;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let gx: Vec<f64> = (x0..=x1)
        .map(|j| (-(j as f64 - x).powi(2) * inv).exp())
        .collect();
    let gy: Vec<f64> = (y0..=y1)
        .map(|i| (-(i as f64 - y).powi(2) * inv).exp())
        .collect();
    let total: f64 = gx.iter().sum::<f64>() * gy.iter().sum::<f64>();
    if total <= 0.0 {
        // σ so small that every tap underflowed: all mass on the nearest pixel.
        map.data[cy.clamp(0, map.height as i64 - 1) as usize * map.width
            + cx.clamp(0, map.width as i64 - 1) as usize] += 1.0;
        return;
    }
    for (i, &vy) in (y0..=y1).zip(&gy) {
        let row = &mut map.data[i * map.width..(i + 1) * map.width];
        for (cell, &vx) in row[x0..=x1].iter_mut().zip(&gx) {
            *cell += vy * vx / total;
        }
    }
}

/// One kernel per point with its own σ.
pub fn generate_with_sigmas(ann: &PointAnnotations, sigmas: &[f64]) -> Result<DensityMap> {
    ann.validate()?;
    if sigmas.len() != ann.len() {
        return Err(Error::input("one sigma per point required"));
    }
    if let Some(s) = sigmas.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::input(format!("sigma must be positive, got {s}")));
    }
    let mut map = DensityMap::zeros(ann.height, ann.width, 1);
    for (&(x, y), &s) in ann.points.iter().zip(sigmas) {
        splat(&mut map, x, y, s);
    }
    Ok(map)
}

/// Isotropic Gaussian with the same σ for every point.
pub fn generate_fixed(ann: &PointAnnotations, sigma: f64) -> Result<DensityMap> {
    generate_with_sigmas(ann, &vec![sigma; ann.len()])
}

/// Per-point σ for geometry-adaptive kernels, plus whether the fixed fallback
/// was used (fewer than two points).
pub fn adaptive_sigmas(points: &[(f64, f64)], params: &AdaptiveKernel) -> Result<(Vec<f64>, bool)> {
    if params.k == 0 {
        return Err(Error::input("k must be >= 1"));
    }
    if points.len() < 2 {
        return Ok((vec![params.fallback_sigma; points.len()], true));
    }
    let means = knn_distances(points, params.k)?;
    let sigmas = means
        .into_iter()
        .map(|d| (params.beta * d).clamp(params.sigma_min, params.sigma_max))
        .collect();
    Ok((sigmas, false))
}

/// σᵢ = β · mean distance to the k nearest other points (fewer if the image
/// has fewer than k+1 points), clamped to `[σ_min, σ_max]`.
pub fn generate_adaptive(ann: &PointAnnotations, params: &AdaptiveKernel) -> Result<DensityMap> {
    let (sigmas, _) = adaptive_sigmas(&ann.points, params)?;
    generate_with_sigmas(ann, &sigmas)
}

/// Non-overlapping 4×4 block sums. Inputs whose sides are not multiples of 4
/// are treated as zero-padded on the right/bottom.
pub fn sum_pool_4(d: &DensityMap) -> DensityMap {
    let (oh, ow) = (d.height.div_ceil(4), d.width.div_ceil(4));
    let mut out = DensityMap::zeros(oh, ow, d.scale_factor * 4);
    for y in 0..d.height {
        let row = &d.data[y * d.width..(y + 1) * d.width];
        let dst = &mut out.data[(y / 4) * ow..(y / 4 + 1) * ow];
        for (x, &v) in row.iter().enumerate() {
            dst[x / 4] += v;
        }
    }
    out
}
