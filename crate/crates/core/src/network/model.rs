//! The image-pyramid model: a shared backbone run on every scale, an attention
//! sub-net on the backbone's penultimate features, and the fusion stage.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Activation, LayerSpec, NetworkConfig};
use crate::error::{Error, Result};
use crate::tensor::{ConvParams, ParamId, Tape, Tensor4, Var, LEAKY_SLOPE};

/// How per-scale density maps are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Across-scale softmax on attention, weight the densities, 1×1 conv.
    Adaptive,
    /// 1×1 conv over the raw densities, no attention.
    Fixed,
    /// As adaptive but with unnormalised attention.
    NoSoftmax,
    /// Softmax-weighted densities summed, no conv.
    Sum,
    /// Backbone only, one scale, no attention or fusion parameters.
    Single,
}

impl FusionMode {
    pub const ALL: [FusionMode; 5] = [
        FusionMode::Adaptive,
        FusionMode::Fixed,
        FusionMode::NoSoftmax,
        FusionMode::Sum,
        FusionMode::Single,
    ];

    pub fn code(self) -> u8 {
        match self {
            FusionMode::Adaptive => 0,
            FusionMode::Fixed => 1,
            FusionMode::NoSoftmax => 2,
            FusionMode::Sum => 3,
            FusionMode::Single => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.code() == code)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Adaptive => "adaptive",
            FusionMode::Fixed => "fixed",
            FusionMode::NoSoftmax => "no_softmax",
            FusionMode::Sum => "sum",
            FusionMode::Single => "single",
        }
    }

    pub fn uses_attention(self) -> bool {
        matches!(
            self,
            FusionMode::Adaptive | FusionMode::NoSoftmax | FusionMode::Sum
        )
    }

    pub fn uses_fusion_conv(self) -> bool {
        matches!(
            self,
            FusionMode::Adaptive | FusionMode::Fixed | FusionMode::NoSoftmax
        )
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s || (s == "w/o_softmax" && *m == FusionMode::NoSoftmax))
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown fusion mode '{s}' (adaptive, fixed, no_softmax, sum, single)"
                ))
            })
    }
}

/// Default pyramid for a given number of scales.
pub fn default_scales(count: usize) -> Result<Vec<f32>> {
    match count {
        1 => Ok(vec![1.0]),
        2 => Ok(vec![1.0, 0.7]),
        3 => Ok(vec![1.0, 0.7, 0.5]),
        n => Err(Error::config(format!("no default pyramid for {n} scales"))),
    }
}

/// Zero-mean uniform init with bound `sqrt(6 / (fan_in + fan_out))`, zero bias.
fn init_conv(rng: &mut impl Rng, out_ch: usize, in_ch: usize, kh: usize, kw: usize) -> ConvParams {
    let fan_in = (in_ch * kh * kw) as f64;
    let fan_out = (out_ch * kh * kw) as f64;
    let bound = (6.0 / (fan_in + fan_out)).sqrt() as f32;
    let weights = Tensor4::from_fn([out_ch, in_ch, kh, kw], |_| {
        rng.random_range(-bound..=bound)
    });
    ConvParams {
        weights,
        bias: vec![0.0; out_ch],
    }
}

/// Backbone parameters, one [`ConvParams`] per conv layer of the config.
#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    pub config: NetworkConfig,
    pub convs: Vec<ConvParams>,
}

pub fn build_backbone(config: &NetworkConfig, seed: u64) -> Result<Backbone> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_backbone_with(config, &mut rng)
}

fn build_backbone_with(config: &NetworkConfig, rng: &mut impl Rng) -> Result<Backbone> {
    config.validate()?;
    let convs = config
        .convs()
        .map(|l| match *l {
            LayerSpec::Conv {
                out_ch,
                in_ch,
                kh,
                kw,
                ..
            } => init_conv(rng, out_ch, in_ch, kh, kw),
            LayerSpec::Pool => unreachable!(),
        })
        .collect();
    Ok(Backbone {
        config: config.clone(),
        convs,
    })
}

/// Channels produced by the attention sub-net's first layer.
pub const ATTENTION_HIDDEN: usize = 8;

/// `[in_ch → 8, 3×3, leaky ReLU]`, `[8 → 1, 1×1, linear]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionNet {
    pub conv1: ConvParams,
    pub conv2: ConvParams,
}

impl AttentionNet {
    pub fn param_count(&self) -> usize {
        self.conv1.param_count() + self.conv2.param_count()
    }
}

pub fn build_attention_subnet(in_ch: usize, seed: u64) -> AttentionNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_attention_with(in_ch, &mut rng)
}

fn build_attention_with(in_ch: usize, rng: &mut impl Rng) -> AttentionNet {
    AttentionNet {
        conv1: init_conv(rng, ATTENTION_HIDDEN, in_ch, 3, 3),
        conv2: init_conv(rng, 1, ATTENTION_HIDDEN, 1, 1),
    }
}

/// Everything `forward` produces besides the fused map.
#[derive(Debug)]
pub struct PyramidOutput {
    /// Fused density at `(h/4, w/4)`, still in training units (×density scale).
    pub fused: Var,
    /// Per-scale backbone densities, upsampled to `(h/4, w/4)`.
    pub densities: Vec<Tensor4>,
    /// Per-scale attention maps at `(h/4, w/4)`; post-softmax in adaptive and
    /// sum modes, raw in no-softmax mode, empty when attention is unused.
    pub attention: Vec<Tensor4>,
}

/// Backbone + attention + fusion. All parameters live in one list so that the
/// tape can refer to them by index: backbone convs first, then the two
/// attention convs (if any), then the fusion conv (if any).
#[derive(Clone, Debug, PartialEq)]
pub struct PyramidModel {
    config: NetworkConfig,
    scales: Vec<f32>,
    mode: FusionMode,
    params: Vec<ConvParams>,
}

impl PyramidModel {
    /// Build with fresh initial weights. The backbone is drawn first, then the
    /// attention sub-net, from one seeded stream.
    pub fn build(
        config: &NetworkConfig,
        scales: &[f32],
        mode: FusionMode,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let backbone = build_backbone_with(config, &mut rng)?;
        let attention = if mode.uses_attention() {
            Some(build_attention_with(
                config.penultimate_channels()?,
                &mut rng,
            ))
        } else {
            None
        };
        Self::assemble(backbone, attention, scales, mode)
    }

    pub fn preset(name: &str, scales: &[f32], mode: FusionMode, seed: u64) -> Result<Self> {
        Self::build(&NetworkConfig::preset(name)?, scales, mode, seed)
    }

    /// Combine existing parts; the fusion conv starts as a plain average.
    pub fn assemble(
        backbone: Backbone,
        attention: Option<AttentionNet>,
        scales: &[f32],
        mode: FusionMode,
    ) -> Result<Self> {
        validate_scales(scales, mode)?;
        let s = scales.len();
        let mut params = backbone.convs;
        match (mode.uses_attention(), attention) {
            (true, Some(att)) => {
                let expected = backbone.config.penultimate_channels()?;
                if att.conv1.in_ch() != expected {
                    return Err(Error::config(format!(
                        "attention sub-net takes {} channels but the backbone's penultimate conv has {expected}",
                        att.conv1.in_ch()
                    )));
                }
                params.push(att.conv1);
                params.push(att.conv2);
            }
            (true, None) => {
                return Err(Error::config(format!(
                    "{mode} fusion needs an attention sub-net"
                )))
            }
            (false, Some(_)) => {
                return Err(Error::config(format!(
                    "{mode} fusion has no attention sub-net"
                )))
            }
            (false, None) => {}
        }
        if mode.uses_fusion_conv() {
            params.push(ConvParams {
                weights: Tensor4::filled([1, s, 1, 1], 1.0 / s as f32),
                bias: vec![0.0],
            });
        }
        let model = PyramidModel {
            config: backbone.config,
            scales: scales.to_vec(),
            mode,
            params,
        };
        model.check_param_shapes()?;
        Ok(model)
    }

    /// Model with the given parameters (e.g. read from disk); shapes are checked.
    pub fn from_parts(
        config: NetworkConfig,
        scales: Vec<f32>,
        mode: FusionMode,
        params: Vec<ConvParams>,
    ) -> Result<Self> {
        config.validate()?;
        validate_scales(&scales, mode)?;
        let model = PyramidModel {
            config,
            scales,
            mode,
            params,
        };
        model.check_param_shapes()?;
        Ok(model)
    }

    /// Expected `(name, weight dims)` of every parameter tensor, in storage order.
    pub fn expected_shapes(&self) -> Result<Vec<(String, [usize; 4])>> {
        expected_shapes(&self.config, self.scales.len(), self.mode)
    }

    fn check_param_shapes(&self) -> Result<()> {
        let expected = self.expected_shapes()?;
        if expected.len() != self.params.len() {
            return Err(Error::shape(format!(
                "model needs {} parameter layers, got {}",
                expected.len(),
                self.params.len()
            )));
        }
        for ((name, dims), p) in expected.iter().zip(&self.params) {
            if p.weights.dims() != *dims || p.bias.len() != dims[0] {
                return Err(Error::shape(format!(
                    "{name}: expected weights {dims:?}, got {:?} (+{} bias)",
                    p.weights.dims(),
                    p.bias.len()
                )));
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn scales(&self) -> &[f32] {
        &self.scales
    }

    pub fn mode(&self) -> FusionMode {
        self.mode
    }

    pub fn params(&self) -> &[ConvParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ConvParams] {
        &mut self.params
    }

    pub fn param_names(&self) -> Vec<String> {
        self.expected_shapes()
            .map(|v| v.into_iter().map(|(n, _)| n).collect())
            .unwrap_or_default()
    }

    pub fn zero_grads(&self) -> Vec<ConvParams> {
        self.params.iter().map(ConvParams::zeros_like).collect()
    }

    fn backbone_len(&self) -> usize {
        self.config.conv_count()
    }

    pub fn backbone_ids(&self) -> std::ops::Range<usize> {
        0..self.backbone_len()
    }

    pub fn attention_ids(&self) -> std::ops::Range<usize> {
        let start = self.backbone_len();
        if self.mode.uses_attention() {
            start..start + 2
        } else {
            start..start
        }
    }

    pub fn fusion_id(&self) -> Option<usize> {
        self.mode.uses_fusion_conv().then(|| self.params.len() - 1)
    }

    /// Total learnable scalars, biases included.
    pub fn count_parameters(&self) -> usize {
        self.params.iter().map(ConvParams::param_count).sum()
    }

    /// Run the backbone on one pyramid level. Returns the density map and the
    /// activated output of the penultimate conv.
    fn backbone_forward(&self, tape: &mut Tape, x: &Var) -> Result<(Var, Var)> {
        let n_convs = self.backbone_len();
        let mut h = x.clone();
        let mut penultimate = None;
        let mut conv_idx = 0;
        for layer in &self.config.layers {
            match *layer {
                LayerSpec::Conv { activation, .. } => {
                    h = tape.conv(&h, &self.params, ParamId(conv_idx))?;
                    h = match activation {
                        Activation::LeakyRelu => tape.leaky_relu(&h, LEAKY_SLOPE),
                        Activation::Relu => tape.relu(&h),
                        Activation::None => h,
                    };
                    conv_idx += 1;
                    if conv_idx + 1 == n_convs {
                        penultimate = Some(h.clone());
                    }
                }
                LayerSpec::Pool => h = tape.maxpool(&h)?,
            }
        }
        let penultimate = penultimate.ok_or_else(|| Error::config("backbone has a single conv"))?;
        Ok((h, penultimate))
    }

    fn attention_forward(&self, tape: &mut Tape, features: &Var) -> Result<Var> {
        let ids = self.attention_ids();
        let h = tape.conv(features, &self.params, ParamId(ids.start))?;
        let h = tape.leaky_relu(&h, LEAKY_SLOPE);
        tape.conv(&h, &self.params, ParamId(ids.start + 1))
    }

    /// Forward pass over the whole pyramid. `image` is `(n, 1, h, w)` with
    /// `h` and `w` multiples of 4; the result is at `(h/4, w/4)`.
    pub fn forward_on(&self, tape: &mut Tape, image: &Tensor4) -> Result<PyramidOutput> {
        let [_, c, h, w] = image.dims();
        if c != 1 {
            return Err(Error::Precondition(format!(
                "expected a 1-channel image, got {c}"
            )));
        }
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::Precondition(format!(
                "image dims {h}x{w} must be multiples of 4 (pad first)"
            )));
        }
        let (oh, ow) = (h / 4, w / 4);
        let input = tape.constant(image.clone());

        let mut dens = Vec::with_capacity(self.scales.len());
        let mut atts = Vec::with_capacity(self.scales.len());
        for &s in &self.scales {
            let (sh, sw) = scaled_dims(h, w, s);
            if sh < 4 || sw < 4 {
                return Err(Error::Precondition(format!(
                    "scale {s} shrinks a {h}x{w} image to {sh}x{sw}, below the 4x4 minimum"
                )));
            }
            let level = tape.resize(&input, sh, sw)?;
            let (d, feat) = self.backbone_forward(tape, &level)?;
            dens.push(tape.upsample(&d, oh, ow)?);
            if self.mode.uses_attention() {
                let a = self.attention_forward(tape, &feat)?;
                atts.push(tape.upsample(&a, oh, ow)?);
            }
        }

        let (fused, attention) = match self.mode {
            FusionMode::Single => (dens[0].clone(), Vec::new()),
            FusionMode::Fixed => {
                let stack = tape.concat(&dens)?;
                let f = tape.conv(&stack, &self.params, ParamId(self.params.len() - 1))?;
                (tape.relu(&f), Vec::new())
            }
            FusionMode::Adaptive | FusionMode::NoSoftmax | FusionMode::Sum => {
                let weights = if self.mode == FusionMode::NoSoftmax {
                    atts
                } else {
                    tape.softmax(&atts)?
                };
                let rectified = dens
                    .iter()
                    .zip(&weights)
                    .map(|(d, a)| tape.mul(d, a))
                    .collect::<Result<Vec<_>>>()?;
                let f = if self.mode == FusionMode::Sum {
                    tape.sum(&rectified)?
                } else {
                    let stack = tape.concat(&rectified)?;
                    tape.conv(&stack, &self.params, ParamId(self.params.len() - 1))?
                };
                (
                    tape.relu(&f),
                    weights.into_iter().map(Var::into_value).collect(),
                )
            }
        };
        Ok(PyramidOutput {
            fused,
            densities: dens.into_iter().map(Var::into_value).collect(),
            attention,
        })
    }

    /// Inference-only forward (nothing recorded).
    pub fn forward(&self, image: &Tensor4) -> Result<PyramidOutput> {
        self.forward_on(&mut Tape::inference(), image)
    }
}

/// Dims of one pyramid level: `(round(s·h), round(s·w))`.
pub fn scaled_dims(h: usize, w: usize, scale: f32) -> (usize, usize) {
    if scale == 1.0 {
        return (h, w);
    }
    let s = scale as f64;
    (
        (s * h as f64).round() as usize,
        (s * w as f64).round() as usize,
    )
}

fn validate_scales(scales: &[f32], mode: FusionMode) -> Result<()> {
    if scales.is_empty() {
        return Err(Error::config("scale list is empty"));
    }
    if scales[0] != 1.0 {
        return Err(Error::config(format!(
            "first scale must be 1.0, got {}",
            scales[0]
        )));
    }
    if let Some(bad) = scales.iter().find(|&&s| !(s > 0.0 && s <= 1.0)) {
        return Err(Error::config(format!("scale {bad} outside (0, 1]")));
    }
    if mode == FusionMode::Single && scales.len() != 1 {
        return Err(Error::config("single mode takes exactly one scale"));
    }
    Ok(())
}

pub(crate) fn expected_shapes(
    config: &NetworkConfig,
    num_scales: usize,
    mode: FusionMode,
) -> Result<Vec<(String, [usize; 4])>> {
    let mut out = Vec::new();
    for (i, l) in config.convs().enumerate() {
        if let LayerSpec::Conv {
            out_ch,
            in_ch,
            kh,
            kw,
            ..
        } = *l
        {
            out.push((format!("backbone.conv{}", i + 1), [out_ch, in_ch, kh, kw]));
        }
    }
    if mode.uses_attention() {
        let c = config.penultimate_channels()?;
        out.push(("attention.conv1".into(), [ATTENTION_HIDDEN, c, 3, 3]));
        out.push(("attention.conv2".into(), [1, ATTENTION_HIDDEN, 1, 1]));
    }
    if mode.uses_fusion_conv() {
        out.push(("fusion".into(), [1, num_scales, 1, 1]));
    }
    Ok(out)
}
