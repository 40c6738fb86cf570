//! Backbone configs, the attention sub-net, the pyramid model and its weight files.

mod config;
mod model;
mod weights;

pub use config::{receptive_field, Activation, LayerSpec, NetworkConfig, PRESET_NAMES};
pub use model::{
    build_attention_subnet, build_backbone, default_scales, scaled_dims, AttentionNet, Backbone,
    FusionMode, PyramidModel, PyramidOutput, ATTENTION_HIDDEN,
};
pub use weights::{
    decode_weights, decode_weights_with, encode_weights, load_weights, load_weights_with,
    peek_header, save_weights, WeightHeader, FORMAT_VERSION, MAGIC,
};
