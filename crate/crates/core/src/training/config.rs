use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyper-parameters of the training loop. Every field has a default, so a
/// JSON config only needs the entries it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Side of the square input crop at the original scale.
    pub patch_size: usize,
    /// Side of the sum-pooled target (`patch_size / 4`).
    pub target_size: usize,
    /// Multiplier applied to ground-truth densities during training.
    pub density_scale: f64,
    pub lr_initial: f64,
    pub momentum: f64,
    /// The learning rate is multiplied by `lr_decay_factor` every `lr_decay_every` epochs.
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub weight_decay: f64,
    /// Epochs of Adam before switching to SGD with momentum.
    pub adam_warm_epochs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Random crops drawn from every image per epoch.
    pub patches_per_image: usize,
    /// Random horizontal flips of the crops.
    pub flip: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            patch_size: 128,
            target_size: 32,
            density_scale: 100.0,
            lr_initial: 1e-3,
            momentum: 0.9,
            lr_decay_factor: 0.5,
            lr_decay_every: 100,
            weight_decay: 1e-4,
            adam_warm_epochs: 0,
            epochs: 100,
            batch_size: 1,
            patches_per_image: 1,
            flip: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.patch_size != 4 * self.target_size || self.target_size == 0 {
            return fail(format!(
                "patch_size ({}) must be 4 x target_size ({})",
                self.patch_size, self.target_size
            ));
        }
        if !(self.lr_initial > 0.0) || !(self.density_scale > 0.0) || !(self.lr_decay_factor > 0.0)
        {
            return fail("lr_initial, density_scale and lr_decay_factor must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            return fail("weight_decay must be >= 0".into());
        }
        if self.batch_size == 0 || self.lr_decay_every == 0 || self.patches_per_image == 0 {
            return fail("batch_size, lr_decay_every and patches_per_image must be >= 1".into());
        }
        Ok(())
    }

    /// Learning rate for a 0-based epoch index.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr_initial
            * self
                .lr_decay_factor
                .powi((epoch / self.lr_decay_every) as i32)
    }
}
