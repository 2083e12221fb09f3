//! `RPPG` binary checkpoints: a strict little-endian container for model
//! configuration plus named parameter tensors (f32 payload). Loading rejects
//! anything it does not understand — wrong magic, wrong version, unknown
//! kinds or tensor names, shape mismatches, truncation, trailing bytes.

use super::stencoder::{StEncoderConfig, StEncoderParams};
use super::stformer::{StFormerConfig, StFormerParams};
use super::tensor::ParamTensors;
use crate::{CoreError, Result};
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 4] = b"RPPG";
const VERSION: u8 = 1;
const KIND_ST_FORMER: u32 = 1;
const KIND_ST_ENCODER: u32 = 2;

/// A trained model ready to be written to or read from disk.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)] // moved rarely; boxing would only add noise
pub enum ModelCheckpoint {
    StFormer {
        config: StFormerConfig,
        params: StFormerParams,
    },
    StEncoder {
        config: StEncoderConfig,
        params: StEncoderParams,
    },
}

impl ModelCheckpoint {
    fn kind(&self) -> u32 {
        match self {
            ModelCheckpoint::StFormer { .. } => KIND_ST_FORMER,
            ModelCheckpoint::StEncoder { .. } => KIND_ST_ENCODER,
        }
    }

    /// Fixed-order u32 configuration fields; the diagnostic `ln_bypass`
    /// flag is deliberately not persisted.
    fn config_fields(&self) -> Vec<u32> {
        match self {
            ModelCheckpoint::StFormer { config, .. } => vec![
                config.feature_dim as u32,
                config.loops as u32,
                config.tokens as u32,
                config.frames as u32,
                config.channels as u32,
                config.mlp_hidden as u32,
            ],
            ModelCheckpoint::StEncoder { config, .. } => vec![
                config.hidden_channels as u32,
                config.spatial_out as u32,
            ],
        }
    }

    fn tensors(&self) -> Vec<(String, &super::tensor::Tensor)> {
        match self {
            ModelCheckpoint::StFormer { params, .. } => params.named_tensors(),
            ModelCheckpoint::StEncoder { params, .. } => params.named_tensors(),
        }
    }
}

// ── Writing ─────────────────────────────────────────────────────────────────

pub fn write_checkpoint(ckpt: &ModelCheckpoint, path: &Path) -> Result<()> {
    let tensors = ckpt.tensors();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&ckpt.kind().to_le_bytes());
    for field in ckpt.config_fields() {
        buf.extend_from_slice(&field.to_le_bytes());
    }
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, tensor) in tensors {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.push(tensor.dims().len() as u8);
        for &d in tensor.dims() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

// ── Reading ─────────────────────────────────────────────────────────────────

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CoreError::format(format!(
                "{}: truncated checkpoint",
                self.path.display()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != MAGIC {
        return Err(CoreError::format(format!(
            "{}: bad magic, expected RPPG",
            path.display()
        )));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(CoreError::format(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }
    let kind = r.u32()?;
    let mut ckpt = match kind {
        KIND_ST_FORMER => {
            let mut field = || -> Result<usize> { Ok(r.u32()? as usize) };
            let config = StFormerConfig {
                feature_dim: field()?,
                loops: field()?,
                tokens: field()?,
                frames: field()?,
                channels: field()?,
                mlp_hidden: field()?,
                ln_bypass: false,
            };
            config.validate()?;
            let params = StFormerParams::zeros(&config);
            ModelCheckpoint::StFormer { config, params }
        }
        KIND_ST_ENCODER => {
            let config = StEncoderConfig {
                hidden_channels: r.u32()? as usize,
                spatial_out: r.u32()? as usize,
            };
            config.validate()?;
            let params = StEncoderParams::zeros(&config);
            ModelCheckpoint::StEncoder { config, params }
        }
        other => {
            return Err(CoreError::format(format!(
                "{}: unknown model kind {other}",
                path.display()
            )))
        }
    };

    let n_tensors = r.u32()? as usize;
    {
        let mut remaining: Vec<(String, &mut super::tensor::Tensor)> = match &mut ckpt {
            ModelCheckpoint::StFormer { params, .. } => params.named_tensors_mut(),
            ModelCheckpoint::StEncoder { params, .. } => params.named_tensors_mut(),
        };
        if n_tensors != remaining.len() {
            return Err(CoreError::format(format!(
                "{}: expected {} tensors, file declares {n_tensors}",
                path.display(),
                remaining.len()
            )));
        }
        for _ in 0..n_tensors {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| {
                CoreError::format(format!("{}: tensor name is not UTF-8", path.display()))
            })?;
            let rank = r.u8()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32()? as usize);
            }
            let idx = remaining
                .iter()
                .position(|(n, _)| *n == name)
                .ok_or_else(|| {
                    CoreError::format(format!(
                        "{}: unknown or duplicate tensor {name}",
                        path.display()
                    ))
                })?;
            let (_, tensor) = remaining.swap_remove(idx);
            if tensor.dims() != dims.as_slice() {
                return Err(CoreError::format(format!(
                    "{}: tensor {name} has shape {dims:?}, expected {:?}",
                    path.display(),
                    tensor.dims()
                )));
            }
            for slot in tensor.data_mut() {
                *slot = r.f32()? as f64;
            }
        }
        if !remaining.is_empty() {
            return Err(CoreError::format(format!(
                "{}: checkpoint is missing tensor {}",
                path.display(),
                remaining[0].0
            )));
        }
    }
    if r.pos != bytes.len() {
        return Err(CoreError::format(format!(
            "{}: {} trailing bytes after checkpoint payload",
            path.display(),
            bytes.len() - r.pos
        )));
    }
    Ok(ckpt)
}
