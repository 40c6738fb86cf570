//! Patch sampling, optimizers, the training loop and synthetic data.

mod checkpoint;
mod config;
mod optim;
mod patch;
mod synth;
mod trainer;

pub use checkpoint::{
    decode_optimizer_state, encode_optimizer_state, OptimizerState, OPT_MAGIC, OPT_VERSION,
};
pub use config::TrainConfig;
pub use optim::{adam_update, sgd_momentum_update, Adam, AdamHyper, Optimizer, Sgd};
pub use patch::{sample_patch, Patch, Sample};
pub use synth::{generate_synthetic_dataset, render_scene, SyntheticImage, SyntheticSceneSpec};
pub use trainer::{
    compute_gradients, continue_training, train, EpochRecord, TrainLog, TrainOptions, Trainer,
    CHECKPOINT_OPTIMIZER, CHECKPOINT_WEIGHTS, TRAIN_LOG,
};
