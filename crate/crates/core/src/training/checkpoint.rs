//! Optimizer-state sidecar files stored next to weight checkpoints.
//!
//! Layout (little-endian): magic `PYOS`, `u32` version, `u8` kind (0 SGD,
//! 1 Adam), `u32` next epoch, `u64` step counter, `u32` buffer-set count,
//! then every buffer set as a list of `(u32 len, f32 × len)` pairs, two per
//! conv (weights then bias). SGD has one set (velocity), Adam two (m, v).

use std::fs;
use std::path::Path;

use super::optim::{Adam, AdamHyper, Optimizer, Sgd};
use crate::error::{Error, Result};
use crate::tensor::ConvParams;

pub const OPT_MAGIC: &[u8; 4] = b"PYOS";
pub const OPT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub optimizer: Optimizer,
    /// 0-based index of the first epoch still to run.
    pub next_epoch: usize,
}

fn put_set(out: &mut Vec<u8>, set: &[ConvParams]) {
    for p in set {
        for buf in [p.weights.data(), &p.bias[..]] {
            out.extend_from_slice(&(buf.len() as u32).to_le_bytes());
            for v in buf {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
}

pub fn encode_optimizer_state(state: &OptimizerState) -> Vec<u8> {
    let mut out = OPT_MAGIC.to_vec();
    out.extend_from_slice(&OPT_VERSION.to_le_bytes());
    let (kind, steps, sets): (u8, u64, Vec<&[ConvParams]>) = match &state.optimizer {
        Optimizer::Sgd(s) => (0, s.steps, vec![&s.velocity]),
        Optimizer::Adam(a) => (1, a.t, vec![&a.m, &a.v]),
    };
    out.push(kind);
    out.extend_from_slice(&(state.next_epoch as u32).to_le_bytes());
    out.extend_from_slice(&steps.to_le_bytes());
    out.extend_from_slice(&(sets.len() as u32).to_le_bytes());
    for set in sets {
        put_set(&mut out, set);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let s = self.bytes.get(self.pos..self.pos + n).ok_or_else(|| {
            Error::Load(format!("optimizer state truncated while reading {what}"))
        })?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn floats(&mut self, expected: usize, what: &str) -> Result<Vec<f32>> {
        let n = self.u32(what)? as usize;
        if n != expected {
            return Err(Error::Load(format!(
                "{what}: expected {expected} values, found {n}"
            )));
        }
        Ok(self
            .take(4 * n, what)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn set(&mut self, params: &[ConvParams]) -> Result<Vec<ConvParams>> {
        params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut buf = ConvParams::zeros_like(p);
                let w = self.floats(p.weights.len(), &format!("buffer for conv {i} weights"))?;
                buf.weights.data_mut().copy_from_slice(&w);
                buf.bias = self.floats(p.bias.len(), &format!("buffer for conv {i} bias"))?;
                Ok(buf)
            })
            .collect()
    }
}

/// Decode a sidecar; buffer layouts are checked against `params`.
pub fn decode_optimizer_state(
    bytes: &[u8],
    params: &[ConvParams],
    momentum: f64,
    weight_decay: f64,
) -> Result<OptimizerState> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != OPT_MAGIC {
        return Err(Error::Load("optimizer state magic mismatch".into()));
    }
    let version = r.u32("version")?;
    if version != OPT_VERSION {
        return Err(Error::Load(format!(
            "unsupported optimizer state version {version}"
        )));
    }
    let kind = r.take(1, "kind")?[0];
    let next_epoch = r.u32("next epoch")? as usize;
    let steps = r.u64("step counter")?;
    let sets = r.u32("buffer-set count")?;
    let optimizer = match (kind, sets) {
        (0, 1) => Optimizer::Sgd(Sgd {
            momentum,
            weight_decay,
            velocity: r.set(params)?,
            steps,
        }),
        (1, 2) => {
            let m = r.set(params)?;
            let v = r.set(params)?;
            Optimizer::Adam(Adam {
                hyper: AdamHyper::default(),
                m,
                v,
                t: steps,
            })
        }
        _ => {
            return Err(Error::Load(format!(
                "bad optimizer kind {kind} with {sets} buffer sets"
            )))
        }
    };
    if r.pos != bytes.len() {
        return Err(Error::Load("trailing data after optimizer state".into()));
    }
    Ok(OptimizerState {
        optimizer,
        next_epoch,
    })
}

/// Write via a temporary file and rename, so a crash never leaves a torn file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
