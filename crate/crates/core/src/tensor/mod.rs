//! Dense NCHW tensors and the forward/backward kernels used by the network.
//!
//! Every layer type lives in its own submodule as a pair of free functions
//! (`*_forward` / `*_backward`). [`Tape`] strings them together for training.

mod activation;
mod conv;
mod elementwise;
mod pool;
mod softmax;
mod tape;
mod upsample;

pub use activation::{leaky_relu, leaky_relu_backward, relu, relu_backward, LEAKY_SLOPE};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvParams};
pub use elementwise::{
    add_all, concat_channels, elementwise_mul, elementwise_mul_backward, mse_loss,
    mse_loss_backward, split_channels,
};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward};
pub use softmax::{softmax_across_scales, softmax_across_scales_backward};
pub use tape::{OpKind, ParamId, Tape, Var};
pub use upsample::{bilinear_resize, bilinear_resize_backward, bilinear_upsample};

use crate::error::{Error, Result};

/// Batch, channel, height, width.
pub type Dims = [usize; 4];

/// Dense 4-D array of `f32` in row-major NCHW order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    dims: Dims,
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn new(dims: Dims, data: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::config(format!(
                "tensor dims must be >= 1, got {dims:?}"
            )));
        }
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::shape(format!(
                "data length {} does not match dims {dims:?} (expected {len})",
                data.len()
            )));
        }
        Ok(Tensor4 { dims, data })
    }

    /// # Panics
    /// If any dimension is zero.
    pub fn filled(dims: Dims, value: f32) -> Self {
        assert!(
            dims.iter().all(|&d| d > 0),
            "tensor dims must be >= 1, got {dims:?}"
        );
        Tensor4 {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn zeros(dims: Dims) -> Self {
        Self::filled(dims, 0.0)
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut([usize; 4]) -> f32) -> Self {
        let mut t = Self::zeros(dims);
        let [n, c, h, w] = dims;
        let mut i = 0;
        for b in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        t.data[i] = f([b, ch, y, x]);
                        i += 1;
                    }
                }
            }
        }
        t
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn n(&self) -> usize {
        self.dims[0]
    }

    pub fn c(&self) -> usize {
        self.dims[1]
    }

    pub fn h(&self) -> usize {
        self.dims[2]
    }

    pub fn w(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.offset(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f32) {
        let i = self.offset(n, c, y, x);
        self.data[i] = v;
    }

    /// One `h × w` plane.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let hw = self.dims[2] * self.dims[3];
        let start = (n * self.dims[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let hw = self.dims[2] * self.dims[3];
        let start = (n * self.dims[1] + c) * hw;
        &mut self.data[start..start + hw]
    }

    /// Sum of all entries, accumulated in `f64`.
    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor4 {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&mut self, k: f32) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    /// `self += other`, dims must agree.
    pub fn add_assign(&mut self, other: &Tensor4) -> Result<()> {
        ensure_same_dims(self, other, "add_assign")?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, &b)| *a += b);
        Ok(())
    }

    pub fn reshape(self, dims: Dims) -> Result<Tensor4> {
        Tensor4::new(dims, self.data)
    }

    /// Stack single-sample tensors along the batch axis.
    pub fn stack_batch(items: &[Tensor4]) -> Result<Tensor4> {
        let first = items
            .first()
            .ok_or_else(|| Error::config("cannot stack an empty batch"))?;
        let [_, c, h, w] = first.dims;
        let mut data = Vec::with_capacity(items.len() * first.len());
        for t in items {
            if t.dims[1..] != first.dims[1..] {
                return Err(Error::shape(format!(
                    "batch members disagree: {:?} vs {:?}",
                    t.dims, first.dims
                )));
            }
            data.extend_from_slice(&t.data);
        }
        let n: usize = items.iter().map(|t| t.dims[0]).sum();
        Tensor4::new([n, c, h, w], data)
    }
}

pub(crate) fn ensure_same_dims(a: &Tensor4, b: &Tensor4, op: &str) -> Result<()> {
    if a.dims != b.dims {
        return Err(Error::shape(format!(
            "{op}: dims {:?} and {:?} differ",
            a.dims, b.dims
        )));
    }
    Ok(())
}
