//! Little-endian weight files.
//!
//! ```text
//! magic      4 bytes  "PYRD"
//! version    u32      1
//! name       u32 length + UTF-8 bytes (backbone config name)
//! scales     u32      S
//! mode       u8       0 adaptive, 1 fixed, 2 no_softmax, 3 sum, 4 single
//! tensors    for every conv in storage order: weights then bias, each as
//!            rank u32, dims u32 × rank, f32 × prod(dims)
//! ```
//!
//! Scale values are not stored; a file with S scales reloads with the default
//! pyramid for S (`1.0`, `1.0 0.7`, `1.0 0.7 0.5`) unless the caller supplies one.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::config::NetworkConfig;
use super::model::{default_scales, FusionMode, PyramidModel};
use crate::error::{Error, Result};
use crate::tensor::{ConvParams, Tensor4};

pub const MAGIC: &[u8; 4] = b"PYRD";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightHeader {
    pub config_name: String,
    pub num_scales: usize,
    pub mode: FusionMode,
}

pub fn encode_weights(model: &PyramidModel) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let name = model.config().name.as_bytes();
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name);
    buf.extend_from_slice(&(model.scales().len() as u32).to_le_bytes());
    buf.push(model.mode().code());
    for p in model.params() {
        write_tensor(&mut buf, &p.weights.dims(), p.weights.data());
        write_tensor(&mut buf, &[p.bias.len()], &p.bias);
    }
    buf
}

fn write_tensor(buf: &mut Vec<u8>, dims: &[usize], data: &[f32]) {
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save_weights(model: &PyramidModel, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_weights(model))?;
    f.sync_all()?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Load(format!(
                "truncated file while reading {field} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn tensor(&mut self, field: &str) -> Result<(Vec<usize>, Vec<f32>)> {
        let rank = self.u32(&format!("{field} rank"))? as usize;
        if rank == 0 || rank > 4 {
            return Err(Error::Load(format!("{field}: unsupported rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u32(&format!("{field} dims"))? as usize);
        }
        let len: usize = dims.iter().product();
        let raw = self.take(len * 4, &format!("{field} data"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((dims, data))
    }
}

fn read_header(r: &mut Reader) -> Result<WeightHeader> {
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Load("magic: not a PYRD weight file".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Load(format!(
            "version: file has {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let len = r.u32("config name length")? as usize;
    let config_name = std::str::from_utf8(r.take(len, "config name")?)
        .map_err(|_| Error::Load("config name: invalid UTF-8".into()))?
        .to_string();
    let num_scales = r.u32("scale count")? as usize;
    let code = r.take(1, "fusion mode")?[0];
    let mode = FusionMode::from_code(code)
        .ok_or_else(|| Error::Load(format!("fusion mode: unknown code {code}")))?;
    Ok(WeightHeader {
        config_name,
        num_scales,
        mode,
    })
}

pub fn peek_header(bytes: &[u8]) -> Result<WeightHeader> {
    read_header(&mut Reader { bytes, pos: 0 })
}

/// Decode against an explicit backbone config (e.g. a custom JSON config).
/// `scales` defaults to the standard pyramid for the stored scale count.
pub fn decode_weights_with(
    bytes: &[u8],
    config: &NetworkConfig,
    scales: Option<Vec<f32>>,
) -> Result<PyramidModel> {
    let mut r = Reader { bytes, pos: 0 };
    let header = read_header(&mut r)?;
    let scales = match scales {
        Some(s) => s,
        None => default_scales(header.num_scales).map_err(|e| Error::Load(e.to_string()))?,
    };
    if scales.len() != header.num_scales {
        return Err(Error::Load(format!(
            "scale count: file has {}, caller supplied {}",
            header.num_scales,
            scales.len()
        )));
    }
    let expected = super::model::expected_shapes(config, header.num_scales, header.mode)?;
    let mut params = Vec::with_capacity(expected.len());
    for (name, dims) in &expected {
        let (wd, wdata) = r.tensor(&format!("{name}.weight"))?;
        if wd != dims {
            return Err(Error::Shape(format!(
                "{name}.weight: file has dims {wd:?}, config '{}' expects {dims:?}",
                config.name
            )));
        }
        let (bd, bias) = r.tensor(&format!("{name}.bias"))?;
        if bd != [dims[0]] {
            return Err(Error::Shape(format!(
                "{name}.bias: file has dims {bd:?}, expected [{}]",
                dims[0]
            )));
        }
        params.push(ConvParams {
            weights: Tensor4::new(*dims, wdata)?,
            bias,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Load(format!(
            "trailing data: {} unread bytes after the last tensor",
            bytes.len() - r.pos
        )));
    }
    PyramidModel::from_parts(config.clone(), scales, header.mode, params)
}

/// Decode a file whose config name is one of the built-in presets.
pub fn decode_weights(bytes: &[u8]) -> Result<PyramidModel> {
    let header = peek_header(bytes)?;
    let config = NetworkConfig::preset(&header.config_name)
        .map_err(|e| Error::Load(format!("config name: {e}")))?;
    decode_weights_with(bytes, &config, None)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<PyramidModel> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_weights(&bytes)
}

pub fn load_weights_with(
    path: impl AsRef<Path>,
    config: &NetworkConfig,
    scales: Option<Vec<f32>>,
) -> Result<PyramidModel> {
    decode_weights_with(&fs::read(path)?, config, scales)
}
