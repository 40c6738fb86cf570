use rand::Rng;

use crate::density::{sum_pool_4, DensityMap};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::tensor::Tensor4;

/// One training or evaluation image with its full-resolution density map.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub name: String,
    pub image: GrayImage,
    pub density: DensityMap,
    /// Ground-truth count (number of annotated points).
    pub count: f64,
}

impl Sample {
    pub fn new(
        name: impl Into<String>,
        image: GrayImage,
        density: DensityMap,
        count: f64,
    ) -> Result<Self> {
        if density.scale_factor != 1
            || (density.height, density.width) != (image.height, image.width)
        {
            return Err(Error::shape(format!(
                "density map {}x{} (scale {}) does not match image {}x{}",
                density.height, density.width, density.scale_factor, image.height, image.width
            )));
        }
        Ok(Sample {
            name: name.into(),
            image,
            density,
            count,
        })
    }
}

/// A network-ready crop: `(1, 1, p, p)` input and `(1, 1, p/4, p/4)` target.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub input: Tensor4,
    pub target: Tensor4,
}

fn flip_density(d: &DensityMap) -> DensityMap {
    let mut out = d.clone();
    for row in out.data.chunks_mut(d.width) {
        row.reverse();
    }
    out
}

/// Random `patch_size` crop (images smaller than that are zero-padded first)
/// with the sum-pooled density target multiplied by `density_scale`.
pub fn sample_patch(
    sample: &Sample,
    patch_size: usize,
    density_scale: f64,
    flip: bool,
    rng: &mut impl Rng,
) -> Result<Patch> {
    if patch_size == 0 || !patch_size.is_multiple_of(4) {
        return Err(Error::config(format!(
            "patch size {patch_size} must be a positive multiple of 4"
        )));
    }
    let img = sample.image.pad_to(patch_size, patch_size);
    let (h, w) = (img.height, img.width);
    let top = rng.random_range(0..=h - patch_size);
    let left = rng.random_range(0..=w - patch_size);
    let mut crop = img.crop(top, left, patch_size, patch_size);
    let mut dens = sample.density.crop(top, left, patch_size, patch_size);
    if flip && rng.random_bool(0.5) {
        crop = crop.flip_horizontal();
        dens = flip_density(&dens);
    }
    Ok(Patch {
        input: crop.to_tensor(),
        target: sum_pool_4(&dens).to_tensor(density_scale),
    })
}
