//! SGD with momentum and Adam over a model's conv parameter list.

use crate::error::{Error, Result};
use crate::tensor::ConvParams;

/// `v ← μ·v − lr·(g + λ·w); w ← w + v` on flat buffers.
pub fn sgd_momentum_update(
    w: &mut [f32],
    v: &mut [f32],
    g: &[f32],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    for ((wi, vi), &gi) in w.iter_mut().zip(v.iter_mut()).zip(g) {
        let step = momentum * *vi as f64 - lr * (gi as f64 + weight_decay * *wi as f64);
        *vi = step as f32;
        *wi = (*wi as f64 + step) as f32;
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update for timestep `t` (1-based).
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    w: &mut [f32],
    m: &mut [f32],
    v: &mut [f32],
    g: &[f32],
    t: u64,
    lr: f64,
    hp: AdamHyper,
) {
    let c1 = 1.0 - hp.beta1.powi(t as i32);
    let c2 = 1.0 - hp.beta2.powi(t as i32);
    for (((wi, mi), vi), &gi) in w.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
        let gi = gi as f64;
        let mn = hp.beta1 * *mi as f64 + (1.0 - hp.beta1) * gi;
        let vn = hp.beta2 * *vi as f64 + (1.0 - hp.beta2) * gi * gi;
        *mi = mn as f32;
        *vi = vn as f32;
        let mhat = mn / c1;
        let vhat = vn / c2;
        *wi = (*wi as f64 - lr * mhat / (vhat.sqrt() + hp.eps)) as f32;
    }
}

fn check_finite(grads: &[ConvParams], names: &[String], step: u64) -> Result<()> {
    for (i, g) in grads.iter().enumerate() {
        if !g.weights.all_finite() || g.bias.iter().any(|v| !v.is_finite()) {
            let name = names.get(i).map(String::as_str).unwrap_or("?");
            return Err(Error::Diverged(format!(
                "non-finite gradient in {name} at step {step}"
            )));
        }
    }
    Ok(())
}

fn check_layout(params: &[ConvParams], grads: &[ConvParams], state: &[ConvParams]) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::shape(
            "optimizer state does not match parameter list",
        ));
    }
    for ((p, g), s) in params.iter().zip(grads).zip(state) {
        if p.weights.dims() != g.weights.dims() || p.weights.dims() != s.weights.dims() {
            return Err(Error::shape(
                "optimizer buffer dims do not match parameters",
            ));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    pub velocity: Vec<ConvParams>,
    pub steps: u64,
}

impl Sgd {
    pub fn new(params: &[ConvParams], momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: params.iter().map(ConvParams::zeros_like).collect(),
            steps: 0,
        }
    }

    pub fn step(
        &mut self,
        params: &mut [ConvParams],
        grads: &[ConvParams],
        lr: f64,
        names: &[String],
    ) -> Result<()> {
        check_layout(params, grads, &self.velocity)?;
        check_finite(grads, names, self.steps + 1)?;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(self.velocity.iter_mut()) {
            sgd_momentum_update(
                p.weights.data_mut(),
                v.weights.data_mut(),
                g.weights.data(),
                lr,
                self.momentum,
                self.weight_decay,
            );
            sgd_momentum_update(
                &mut p.bias,
                &mut v.bias,
                &g.bias,
                lr,
                self.momentum,
                self.weight_decay,
            );
        }
        self.steps += 1;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub hyper: AdamHyper,
    pub m: Vec<ConvParams>,
    pub v: Vec<ConvParams>,
    pub t: u64,
}

impl Adam {
    pub fn new(params: &[ConvParams], hyper: AdamHyper) -> Self {
        Adam {
            hyper,
            m: params.iter().map(ConvParams::zeros_like).collect(),
            v: params.iter().map(ConvParams::zeros_like).collect(),
            t: 0,
        }
    }

    pub fn step(
        &mut self,
        params: &mut [ConvParams],
        grads: &[ConvParams],
        lr: f64,
        names: &[String],
    ) -> Result<()> {
        check_layout(params, grads, &self.m)?;
        check_finite(grads, names, self.t + 1)?;
        self.t += 1;
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            adam_update(
                p.weights.data_mut(),
                m.weights.data_mut(),
                v.weights.data_mut(),
                g.weights.data(),
                self.t,
                lr,
                self.hyper,
            );
            adam_update(
                &mut p.bias,
                &mut m.bias,
                &mut v.bias,
                &g.bias,
                self.t,
                lr,
                self.hyper,
            );
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl Optimizer {
    pub fn step(
        &mut self,
        params: &mut [ConvParams],
        grads: &[ConvParams],
        lr: f64,
        names: &[String],
    ) -> Result<()> {
        match self {
            Optimizer::Sgd(o) => o.step(params, grads, lr, names),
            Optimizer::Adam(o) => o.step(params, grads, lr, names),
        }
    }

    pub fn is_adam(&self) -> bool {
        matches!(self, Optimizer::Adam(_))
    }
}
