//! Declarative backbone descriptions and the named presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Relu,
    None,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_ch: usize,
        in_ch: usize,
        kh: usize,
        kw: usize,
        activation: Activation,
    },
    /// 2×2 max pooling, stride 2.
    Pool,
}

impl LayerSpec {
    pub fn conv(out_ch: usize, in_ch: usize, k: usize, activation: Activation) -> Self {
        LayerSpec::Conv {
            out_ch,
            in_ch,
            kh: k,
            kw: k,
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv {
                out_ch,
                in_ch,
                kh,
                kw,
                ..
            } => out_ch * in_ch * kh * kw + out_ch,
            LayerSpec::Pool => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

pub const PRESET_NAMES: &[&str] = &[
    "FCN-7c",
    "FCN-5c",
    "FCN-7c-40",
    "FCN-5c-64",
    "FCN-5c-78",
    "FCN-14c-76",
    "FCN-5c-small",
    "FCN-5c-20",
];

impl NetworkConfig {
    /// Build a config from per-conv `(out_ch, kernel)` pairs, inserting a pool
    /// after each conv index listed in `pools_after` (1-based). Input has one
    /// channel; hidden convs use leaky ReLU and the last uses ReLU.
    pub fn from_stack(name: &str, convs: &[(usize, usize)], pools_after: &[usize]) -> Self {
        let mut layers = Vec::new();
        let mut in_ch = 1;
        for (i, &(out_ch, k)) in convs.iter().enumerate() {
            let activation = if i + 1 == convs.len() {
                Activation::Relu
            } else {
                Activation::LeakyRelu
            };
            layers.push(LayerSpec::conv(out_ch, in_ch, k, activation));
            if pools_after.contains(&(i + 1)) {
                layers.push(LayerSpec::Pool);
            }
            in_ch = out_ch;
        }
        NetworkConfig {
            name: name.to_string(),
            layers,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let cfg = match name {
            "FCN-7c" => Self::from_stack(
                name,
                &[(16, 5), (16, 5), (32, 5), (32, 5), (64, 5), (32, 5), (1, 5)],
                &[2, 4],
            ),
            "FCN-5c" => {
                Self::from_stack(name, &[(16, 5), (32, 5), (64, 3), (32, 3), (1, 3)], &[1, 2])
            }
            "FCN-7c-40" => Self::from_stack(
                name,
                &[(32, 3), (32, 3), (64, 3), (64, 3), (96, 3), (48, 3), (1, 3)],
                &[2, 4],
            ),
            "FCN-5c-64" => {
                Self::from_stack(name, &[(16, 5), (32, 5), (64, 5), (32, 5), (1, 5)], &[1, 2])
            }
            "FCN-5c-78" => {
                Self::from_stack(name, &[(16, 7), (32, 7), (64, 7), (32, 5), (1, 5)], &[1, 2])
            }
            "FCN-14c-76" => {
                let chans = [24, 24, 24, 24, 32, 32, 32, 32, 64, 64, 32, 32, 32, 1];
                let convs: Vec<(usize, usize)> = chans.iter().map(|&c| (c, 3)).collect();
                Self::from_stack(name, &convs, &[4, 8])
            }
            // Reduced-width FCN-5c layout used for desk-scale experiments.
            "FCN-5c-small" => {
                Self::from_stack(name, &[(8, 5), (16, 5), (32, 3), (16, 3), (1, 3)], &[1, 2])
            }
            // Receptive field 20: too small to see a whole large synthetic blob at
            // full resolution, so scale choice matters.
            "FCN-5c-20" => {
                Self::from_stack(name, &[(8, 3), (16, 3), (16, 3), (16, 3), (1, 1)], &[2, 3])
            }
            other => {
                return Err(Error::config(format!(
                    "unknown preset '{other}' (known: {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        debug_assert!(cfg.validate().is_ok());
        Ok(cfg)
    }

    /// Check the structural invariants: chained channels, exactly two pools,
    /// a final 1-channel ReLU conv, odd kernels.
    pub fn validate(&self) -> Result<()> {
        let mut prev_out: Option<usize> = None;
        let mut pools = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv {
                    out_ch,
                    in_ch,
                    kh,
                    kw,
                    ..
                } => {
                    if out_ch == 0 || in_ch == 0 {
                        return Err(Error::config(format!("layer {i}: zero channels")));
                    }
                    if kh % 2 == 0 || kw % 2 == 0 {
                        return Err(Error::config(format!(
                            "layer {i}: kernel {kh}x{kw} must be odd for same padding"
                        )));
                    }
                    let expected = prev_out.unwrap_or(1);
                    if in_ch != expected {
                        return Err(Error::config(format!(
                            "layer {i}: in_ch {in_ch} does not match previous out_ch {expected}"
                        )));
                    }
                    prev_out = Some(out_ch);
                }
                LayerSpec::Pool => {
                    if prev_out.is_none() {
                        return Err(Error::config(format!("layer {i}: pool before any conv")));
                    }
                    pools += 1;
                }
            }
        }
        if pools != 2 {
            return Err(Error::config(format!(
                "'{}' has {pools} pool layers, exactly 2 are required",
                self.name
            )));
        }
        match self.layers.last() {
            Some(LayerSpec::Conv {
                out_ch: 1,
                activation: Activation::Relu,
                ..
            }) => Ok(()),
            _ => Err(Error::config(format!(
                "layer {}: the last layer must be a 1-channel conv with ReLU",
                self.layers.len().saturating_sub(1)
            ))),
        }
    }

    pub fn convs(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Conv { .. }))
    }

    pub fn conv_count(&self) -> usize {
        self.convs().count()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Output channels of the second-to-last conv: the attention sub-net input.
    pub fn penultimate_channels(&self) -> Result<usize> {
        let outs: Vec<usize> = self
            .convs()
            .map(|l| match l {
                LayerSpec::Conv { out_ch, .. } => *out_ch,
                LayerSpec::Pool => unreachable!(),
            })
            .collect();
        if outs.len() < 2 {
            return Err(Error::config(format!(
                "'{}' has fewer than two convs",
                self.name
            )));
        }
        Ok(outs[outs.len() - 2])
    }
}

/// Receptive field of one output pixel: `rf += (k − 1)·jump` per layer, with
/// the jump doubling after every stride-2 pool.
pub fn receptive_field(config: &NetworkConfig) -> usize {
    let mut rf = 1;
    let mut jump = 1;
    for layer in &config.layers {
        match *layer {
            LayerSpec::Conv { kh, .. } => rf += (kh - 1) * jump,
            LayerSpec::Pool => {
                rf += jump;
                jump *= 2;
            }
        }
    }
    rf
}
