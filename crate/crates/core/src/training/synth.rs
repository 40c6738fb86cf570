//! Synthetic perspective scenes: soft-edged disks whose diameter grows
//! linearly with the row, `d(y) = size_base + size_gradient·y`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSceneSpec {
    pub height: usize,
    pub width: usize,
    pub count_min: usize,
    pub count_max: usize,
    /// Disk diameter at row 0, in pixels.
    pub size_base: f64,
    /// Diameter increase per row.
    pub size_gradient: f64,
    /// Width of the linear intensity ramp at the disk edge, in pixels.
    pub edge_softness: f64,
    /// Gaussian pixel noise, in gray levels.
    pub noise_std: f64,
    pub background: u8,
    pub foreground: u8,
    /// Minimum centre distance as a fraction of the two disks' mean diameter.
    pub min_separation: f64,
    pub seed: u64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        SyntheticSceneSpec {
            height: 192,
            width: 192,
            count_min: 10,
            count_max: 30,
            size_base: 6.0,
            size_gradient: 22.0 / 191.0,
            edge_softness: 1.5,
            noise_std: 4.0,
            background: 40,
            foreground: 200,
            min_separation: 0.8,
            seed: 0,
        }
    }
}

impl SyntheticSceneSpec {
    /// Diameters `top` at row 0 and `bottom` at the last row.
    pub fn with_perspective(height: usize, width: usize, top: f64, bottom: f64) -> Self {
        SyntheticSceneSpec {
            height,
            width,
            size_base: top,
            size_gradient: (bottom - top) / (height.max(2) - 1) as f64,
            ..Self::default()
        }
    }

    pub fn size_at(&self, y: f64) -> f64 {
        self.size_base + self.size_gradient * y
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.height == 0 || self.width == 0 {
            return fail("image dims must be non-zero");
        }
        if self.count_min > self.count_max {
            return fail("count_min exceeds count_max");
        }
        let smallest = self
            .size_at(0.0)
            .min(self.size_at((self.height - 1) as f64));
        if !(smallest >= 2.0) {
            return fail("object size must be >= 2 px everywhere in the image");
        }
        if !(self.edge_softness > 0.0) || !(self.noise_std >= 0.0) || !(self.min_separation >= 0.0)
        {
            return fail("edge_softness must be > 0, noise_std and min_separation >= 0");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticImage {
    pub name: String,
    pub image: GrayImage,
    /// Disk centres `(x, y)`, integer-valued.
    pub points: Vec<(f64, f64)>,
    pub diameters: Vec<f64>,
}

/// Opacity of a disk of radius `r` at distance `dist` from its centre.
fn coverage(dist: f64, r: f64, soft: f64) -> f64 {
    ((r - dist) / soft + 0.5).clamp(0.0, 1.0)
}

fn render(
    spec: &SyntheticSceneSpec,
    points: &[(f64, f64)],
    diameters: &[f64],
    rng: &mut ChaCha8Rng,
) -> GrayImage {
    let (h, w) = (spec.height, spec.width);
    let mut alpha = vec![0.0f64; h * w];
    for (&(cx, cy), &d) in points.iter().zip(diameters) {
        let r = d / 2.0;
        let reach = (r + spec.edge_softness).ceil() as i64;
        let y0 = (cy as i64 - reach).max(0) as usize;
        let y1 = (cy as i64 + reach).min(h as i64 - 1) as usize;
        let x0 = (cx as i64 - reach).max(0) as usize;
        let x1 = (cx as i64 + reach).min(w as i64 - 1) as usize;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dist = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                let a = &mut alpha[y * w + x];
                *a = a.max(coverage(dist, r, spec.edge_softness));
            }
        }
    }
    let noise = Normal::new(0.0, spec.noise_std.max(1e-12)).expect("std is positive");
    let (bg, fg) = (spec.background as f64, spec.foreground as f64);
    let data = alpha
        .into_iter()
        .map(|a| {
            let n = if spec.noise_std > 0.0 {
                noise.sample(rng)
            } else {
                0.0
            };
            (bg + (fg - bg) * a + n).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage {
        width: w,
        height: h,
        data,
    }
}

fn place(
    spec: &SyntheticSceneSpec,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<(f64, f64)>, Vec<f64>) {
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(count);
    let mut diameters: Vec<f64> = Vec::with_capacity(count);
    while points.len() < count {
        // Rejection sampling for separation; give up on it after many tries so
        // the requested count is always met.
        let mut candidate = (0.0, 0.0);
        for _ in 0..200 {
            candidate = (
                rng.random_range(0..spec.width) as f64,
                rng.random_range(0..spec.height) as f64,
            );
            let d = spec.size_at(candidate.1);
            let clear = points.iter().zip(&diameters).all(|(&(x, y), &dj)| {
                let dist = ((x - candidate.0).powi(2) + (y - candidate.1).powi(2)).sqrt();
                dist >= spec.min_separation * 0.5 * (d + dj)
            });
            if clear {
                break;
            }
        }
        diameters.push(spec.size_at(candidate.1));
        points.push(candidate);
    }
    (points, diameters)
}

/// `n_images` scenes drawn from one seeded stream; the object count of each
/// is uniform in `[count_min, count_max]`.
pub fn generate_synthetic_dataset(
    spec: &SyntheticSceneSpec,
    n_images: usize,
) -> Result<Vec<SyntheticImage>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((0..n_images)
        .map(|i| {
            let count = rng.random_range(spec.count_min..=spec.count_max);
            let (points, diameters) = place(spec, count, &mut rng);
            let image = render(spec, &points, &diameters, &mut rng);
            SyntheticImage {
                name: format!("img_{i:04}"),
                image,
                points,
                diameters,
            }
        })
        .collect())
}

/// Render explicit disks (noise-free unless `spec.noise_std > 0`).
pub fn render_scene(
    spec: &SyntheticSceneSpec,
    points: &[(f64, f64)],
    diameters: &[f64],
    seed: u64,
) -> GrayImage {
    render(
        spec,
        points,
        diameters,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_counts_and_in_bounds() {
        let spec = SyntheticSceneSpec {
            count_min: 10,
            count_max: 10,
            ..SyntheticSceneSpec::default()
        };
        let imgs = generate_synthetic_dataset(&spec, 5).unwrap();
        assert_eq!(imgs.len(), 5);
        for img in &imgs {
            assert_eq!(img.points.len(), 10);
            assert!(img
                .points
                .iter()
                .all(|&(x, y)| (0.0..192.0).contains(&x) && (0.0..192.0).contains(&y)));
        }
    }

    #[test]
    fn flat_perspective_has_equal_sizes() {
        let spec = SyntheticSceneSpec {
            size_gradient: 0.0,
            size_base: 9.0,
            ..SyntheticSceneSpec::default()
        };
        let imgs = generate_synthetic_dataset(&spec, 3).unwrap();
        assert!(imgs.iter().flat_map(|i| &i.diameters).all(|&d| d == 9.0));
    }

    #[test]
    fn perspective_sizes_follow_rows() {
        let spec = SyntheticSceneSpec::with_perspective(192, 192, 6.0, 28.0);
        assert!((spec.size_at(0.0) - 6.0).abs() < 1e-12);
        assert!((spec.size_at(191.0) - 28.0).abs() < 1e-12);
        let imgs = generate_synthetic_dataset(&spec, 2).unwrap();
        for img in imgs {
            for (&(_, y), &d) in img.points.iter().zip(&img.diameters) {
                assert_eq!(d, spec.size_at(y));
            }
        }
    }

    #[test]
    fn centres_are_rendered_at_annotations() {
        let spec = SyntheticSceneSpec {
            noise_std: 0.0,
            count_min: 6,
            count_max: 6,
            ..SyntheticSceneSpec::default()
        };
        let img = &generate_synthetic_dataset(&spec, 1).unwrap()[0];
        for &(x, y) in &img.points {
            assert_eq!(img.image.get(y as usize, x as usize), spec.foreground);
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let spec = SyntheticSceneSpec::default();
        assert_eq!(
            generate_synthetic_dataset(&spec, 2).unwrap(),
            generate_synthetic_dataset(&spec, 2).unwrap()
        );
        let bad = SyntheticSceneSpec {
            size_base: 1.0,
            size_gradient: 0.0,
            ..SyntheticSceneSpec::default()
        };
        assert!(bad.validate().is_err());
    }
}
