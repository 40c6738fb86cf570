use super::{ensure_same_dims, Tensor4};
use crate::error::Result;

/// Negative-axis slope of the leaky ReLU used after every hidden convolution.
pub const LEAKY_SLOPE: f32 = 0.1;

pub fn leaky_relu(x: &Tensor4, slope: f32) -> Tensor4 {
    x.map(|v| if v >= 0.0 { v } else { slope * v })
}

pub fn leaky_relu_backward(grad_out: &Tensor4, x: &Tensor4, slope: f32) -> Result<Tensor4> {
    ensure_same_dims(grad_out, x, "leaky_relu_backward")?;
    let mut g = grad_out.clone();
    for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
        if xv < 0.0 {
            *gv *= slope;
        }
    }
    Ok(g)
}

pub fn relu(x: &Tensor4) -> Tensor4 {
    x.map(|v| v.max(0.0))
}

/// Subgradient 0 at exactly 0. `x` may be either the input or the output of
/// the forward pass; both are positive at the same positions.
pub fn relu_backward(grad_out: &Tensor4, x: &Tensor4) -> Result<Tensor4> {
    ensure_same_dims(grad_out, x, "relu_backward")?;
    let mut g = grad_out.clone();
    for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
        if xv <= 0.0 {
            *gv = 0.0;
        }
    }
    Ok(g)
}
