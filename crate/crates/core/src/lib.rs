// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod density;
pub mod error;
pub mod evaluation;
pub mod image;
pub mod network;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use network::{FusionMode, NetworkConfig, PyramidModel};
pub use tensor::Tensor4;
