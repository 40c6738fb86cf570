//! Reverse-mode bookkeeping for the fixed set of layer ops.
//!
//! A [`Tape`] either records (training) or not (inference). Recording stores
//! every op whose output depends on a parameter, together with the cached
//! values its backward needs; [`Tape::backward`] then replays those ops in
//! exact reverse order, accumulating parameter gradients into a buffer that
//! mirrors the parameter list.

use std::collections::HashMap;

use super::{activation, conv, elementwise, pool, softmax, upsample, ConvParams, Dims, Tensor4};
use crate::error::{Error, Result};

/// Index of a convolution in the caller's parameter list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// A value produced on a tape. `tracked` is false for constants (the image
/// and anything computed from it without parameters).
#[derive(Clone, Debug)]
pub struct Var {
    id: usize,
    tracked: bool,
    value: Tensor4,
}

impl Var {
    pub fn value(&self) -> &Tensor4 {
        &self.value
    }

    pub fn into_value(self) -> Tensor4 {
        self.value
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn is_tracked(&self) -> bool {
        self.tracked
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Conv,
    LeakyRelu,
    Relu,
    MaxPool,
    Resize,
    Softmax,
    Mul,
    Concat,
    Sum,
}

#[derive(Debug)]
enum Op {
    Conv {
        x: usize,
        x_tracked: bool,
        out: usize,
        param: ParamId,
        input: Tensor4,
    },
    LeakyRelu {
        x: usize,
        out: usize,
        slope: f32,
        input: Tensor4,
    },
    Relu {
        x: usize,
        out: usize,
        output: Tensor4,
    },
    MaxPool {
        x: usize,
        out: usize,
        argmax: Vec<usize>,
        input_dims: Dims,
    },
    Resize {
        x: usize,
        out: usize,
        src: (usize, usize),
    },
    Softmax {
        xs: Vec<usize>,
        outs: Vec<usize>,
        outputs: Vec<Tensor4>,
    },
    Mul {
        a: (usize, bool),
        b: (usize, bool),
        out: usize,
        a_val: Tensor4,
        b_val: Tensor4,
    },
    Concat {
        xs: Vec<(usize, bool)>,
        channels: Vec<usize>,
        out: usize,
    },
    Sum {
        xs: Vec<(usize, bool)>,
        out: usize,
    },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Conv { .. } => OpKind::Conv,
            Op::LeakyRelu { .. } => OpKind::LeakyRelu,
            Op::Relu { .. } => OpKind::Relu,
            Op::MaxPool { .. } => OpKind::MaxPool,
            Op::Resize { .. } => OpKind::Resize,
            Op::Softmax { .. } => OpKind::Softmax,
            Op::Mul { .. } => OpKind::Mul,
            Op::Concat { .. } => OpKind::Concat,
            Op::Sum { .. } => OpKind::Sum,
        }
    }
}

#[derive(Debug)]
pub struct Tape {
    recording: bool,
    next_id: usize,
    ops: Vec<Op>,
}

impl Tape {
    pub fn recording() -> Self {
        Tape {
            recording: true,
            next_id: 0,
            ops: Vec::new(),
        }
    }

    /// A tape that computes values only; `backward` on it is an error.
    pub fn inference() -> Self {
        Tape {
            recording: false,
            next_id: 0,
            ops: Vec::new(),
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    /// Kinds of the recorded ops in forward order.
    pub fn op_kinds(&self) -> Vec<OpKind> {
        self.ops.iter().map(Op::kind).collect()
    }

    /// Parameters referenced by recorded convolutions, in forward order.
    pub fn conv_params(&self) -> Vec<ParamId> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                Op::Conv { param, .. } => Some(*param),
                _ => None,
            })
            .collect()
    }

    fn fresh(&mut self, value: Tensor4, tracked: bool) -> Var {
        let id = self.next_id;
        self.next_id += 1;
        Var {
            id,
            tracked: tracked && self.recording,
            value,
        }
    }

    /// Untracked leaf (no gradient flows into it).
    pub fn constant(&mut self, value: Tensor4) -> Var {
        self.fresh(value, false)
    }

    pub fn conv(&mut self, x: &Var, params: &[ConvParams], id: ParamId) -> Result<Var> {
        let p = params
            .get(id.0)
            .ok_or_else(|| Error::config(format!("no parameter {}", id.0)))?;
        let y = conv::conv2d_forward(&x.value, p)?;
        let out = self.fresh(y, true);
        if out.tracked {
            self.ops.push(Op::Conv {
                x: x.id,
                x_tracked: x.tracked,
                out: out.id,
                param: id,
                input: x.value.clone(),
            });
        }
        Ok(out)
    }

    pub fn leaky_relu(&mut self, x: &Var, slope: f32) -> Var {
        let out = self.fresh(activation::leaky_relu(&x.value, slope), x.tracked);
        if out.tracked {
            self.ops.push(Op::LeakyRelu {
                x: x.id,
                out: out.id,
                slope,
                input: x.value.clone(),
            });
        }
        out
    }

    pub fn relu(&mut self, x: &Var) -> Var {
        let out = self.fresh(activation::relu(&x.value), x.tracked);
        if out.tracked {
            self.ops.push(Op::Relu {
                x: x.id,
                out: out.id,
                output: out.value.clone(),
            });
        }
        out
    }

    pub fn maxpool(&mut self, x: &Var) -> Result<Var> {
        let (y, argmax) = pool::maxpool2x2_forward(&x.value)?;
        let out = self.fresh(y, x.tracked);
        if out.tracked {
            self.ops.push(Op::MaxPool {
                x: x.id,
                out: out.id,
                argmax,
                input_dims: x.value.dims(),
            });
        }
        Ok(out)
    }

    pub fn resize(&mut self, x: &Var, th: usize, tw: usize) -> Result<Var> {
        let y = upsample::bilinear_resize(&x.value, th, tw)?;
        let out = self.fresh(y, x.tracked);
        if out.tracked {
            self.ops.push(Op::Resize {
                x: x.id,
                out: out.id,
                src: (x.value.h(), x.value.w()),
            });
        }
        Ok(out)
    }

    pub fn upsample(&mut self, x: &Var, th: usize, tw: usize) -> Result<Var> {
        if th < x.value.h() || tw < x.value.w() {
            // Same check and message as the free function.
            upsample::bilinear_upsample(&x.value, th, tw)?;
        }
        self.resize(x, th, tw)
    }

    pub fn softmax(&mut self, xs: &[Var]) -> Result<Vec<Var>> {
        let vals: Vec<Tensor4> = xs.iter().map(|v| v.value.clone()).collect();
        let ys = softmax::softmax_across_scales(&vals)?;
        let tracked = xs.iter().any(|v| v.tracked);
        let outs: Vec<Var> = ys.into_iter().map(|y| self.fresh(y, tracked)).collect();
        if tracked && self.recording {
            self.ops.push(Op::Softmax {
                xs: xs.iter().map(|v| v.id).collect(),
                outs: outs.iter().map(|v| v.id).collect(),
                outputs: outs.iter().map(|v| v.value.clone()).collect(),
            });
        }
        Ok(outs)
    }

    pub fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = elementwise::elementwise_mul(&a.value, &b.value)?;
        let out = self.fresh(y, a.tracked || b.tracked);
        if out.tracked {
            self.ops.push(Op::Mul {
                a: (a.id, a.tracked),
                b: (b.id, b.tracked),
                out: out.id,
                a_val: a.value.clone(),
                b_val: b.value.clone(),
            });
        }
        Ok(out)
    }

    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let vals: Vec<Tensor4> = xs.iter().map(|v| v.value.clone()).collect();
        let y = elementwise::concat_channels(&vals)?;
        let out = self.fresh(y, xs.iter().any(|v| v.tracked));
        if out.tracked {
            self.ops.push(Op::Concat {
                xs: xs.iter().map(|v| (v.id, v.tracked)).collect(),
                channels: xs.iter().map(|v| v.value.c()).collect(),
                out: out.id,
            });
        }
        Ok(out)
    }

    pub fn sum(&mut self, xs: &[Var]) -> Result<Var> {
        let vals: Vec<Tensor4> = xs.iter().map(|v| v.value.clone()).collect();
        let y = elementwise::add_all(&vals)?;
        let out = self.fresh(y, xs.iter().any(|v| v.tracked));
        if out.tracked {
            self.ops.push(Op::Sum {
                xs: xs.iter().map(|v| (v.id, v.tracked)).collect(),
                out: out.id,
            });
        }
        Ok(out)
    }

    /// Back-propagate `seed` (the loss gradient w.r.t. `root`) through every
    /// recorded op, adding parameter gradients into `grads` (same layout as
    /// `params`). Returns the indices of the ops visited, in visit order.
    pub fn backward(
        &self,
        root: &Var,
        seed: Tensor4,
        params: &[ConvParams],
        grads: &mut [ConvParams],
    ) -> Result<Vec<usize>> {
        if !self.recording {
            return Err(Error::config("backward called on an inference tape"));
        }
        if params.len() != grads.len() {
            return Err(Error::shape(
                "gradient buffer does not match parameter list",
            ));
        }
        if seed.dims() != root.value.dims() {
            return Err(Error::shape(format!(
                "seed {:?} does not match root {:?}",
                seed.dims(),
                root.value.dims()
            )));
        }
        let mut acc: HashMap<usize, Tensor4> = HashMap::new();
        acc.insert(root.id, seed);
        let mut visited = Vec::with_capacity(self.ops.len());

        fn add(acc: &mut HashMap<usize, Tensor4>, id: usize, g: Tensor4) -> Result<()> {
            match acc.get_mut(&id) {
                Some(existing) => existing.add_assign(&g),
                None => {
                    acc.insert(id, g);
                    Ok(())
                }
            }
        }

        for (idx, op) in self.ops.iter().enumerate().rev() {
            visited.push(idx);
            match op {
                Op::Conv {
                    x,
                    x_tracked,
                    out,
                    param,
                    input,
                } => {
                    let Some(g) = acc.remove(out) else { continue };
                    let p = &params[param.0];
                    let cg = conv::conv2d_backward(&g, input, p, *x_tracked)?;
                    let dst = &mut grads[param.0];
                    dst.weights.add_assign(&cg.grad_w)?;
                    for (d, s) in dst.bias.iter_mut().zip(&cg.grad_b) {
                        *d += s;
                    }
                    if let Some(gx) = cg.grad_x {
                        add(&mut acc, *x, gx)?;
                    }
                }
                Op::LeakyRelu {
                    x,
                    out,
                    slope,
                    input,
                } => {
                    let Some(g) = acc.remove(out) else { continue };
                    add(
                        &mut acc,
                        *x,
                        activation::leaky_relu_backward(&g, input, *slope)?,
                    )?;
                }
                Op::Relu { x, out, output } => {
                    let Some(g) = acc.remove(out) else { continue };
                    add(&mut acc, *x, activation::relu_backward(&g, output)?)?;
                }
                Op::MaxPool {
                    x,
                    out,
                    argmax,
                    input_dims,
                } => {
                    let Some(g) = acc.remove(out) else { continue };
                    add(
                        &mut acc,
                        *x,
                        pool::maxpool2x2_backward(&g, argmax, *input_dims)?,
                    )?;
                }
                Op::Resize { x, out, src } => {
                    let Some(g) = acc.remove(out) else { continue };
                    add(
                        &mut acc,
                        *x,
                        upsample::bilinear_resize_backward(&g, src.0, src.1)?,
                    )?;
                }
                Op::Softmax { xs, outs, outputs } => {
                    if outs.iter().all(|o| !acc.contains_key(o)) {
                        continue;
                    }
                    let gs: Vec<Tensor4> = outs
                        .iter()
                        .zip(outputs)
                        .map(|(o, y)| acc.remove(o).unwrap_or_else(|| Tensor4::zeros(y.dims())))
                        .collect();
                    let gin = softmax::softmax_across_scales_backward(&gs, outputs)?;
                    for (x, g) in xs.iter().zip(gin) {
                        add(&mut acc, *x, g)?;
                    }
                }
                Op::Mul {
                    a,
                    b,
                    out,
                    a_val,
                    b_val,
                } => {
                    let Some(g) = acc.remove(out) else { continue };
                    let (ga, gb) = elementwise::elementwise_mul_backward(&g, a_val, b_val)?;
                    if a.1 {
                        add(&mut acc, a.0, ga)?;
                    }
                    if b.1 {
                        add(&mut acc, b.0, gb)?;
                    }
                }
                Op::Concat { xs, channels, out } => {
                    let Some(g) = acc.remove(out) else { continue };
                    let parts = elementwise::split_channels(&g, channels)?;
                    for ((x, tracked), part) in xs.iter().zip(parts) {
                        if *tracked {
                            add(&mut acc, *x, part)?;
                        }
                    }
                }
                Op::Sum { xs, out } => {
                    let Some(g) = acc.remove(out) else { continue };
                    for (x, tracked) in xs {
                        if *tracked {
                            add(&mut acc, *x, g.clone())?;
                        }
                    }
                }
            }
        }
        Ok(visited)
    }
}
