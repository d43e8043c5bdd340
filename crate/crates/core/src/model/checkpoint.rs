//! `SEAM` checkpoint files.
//!
//! Layout (little-endian): magic `b"SEAM"`, version u32 = 1, then the config
//! as u32 fields `input_dim, hidden_dim, embed_dim, chunk_frames,
//! pretrain_epochs, sea_epochs, rng_seed, stop_gradient` followed by
//! `learning_rate` and `momentum` as f64. Then the 14 parameter tensors in
//! [`ModelParams::tensors`] order, each as `rows u32, cols u32` and
//! row-major f32 values.

use std::fs;
use std::io::{self, Read};
use std::path::Path;

use super::{ModelParams, SeaConfig};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SEAM";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(p: &ModelParams<f32>, cfg: &SeaConfig) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [
        cfg.input_dim as u32,
        cfg.hidden_dim as u32,
        cfg.embed_dim as u32,
        cfg.chunk_frames as u32,
        cfg.pretrain_epochs as u32,
        cfg.sea_epochs as u32,
        cfg.rng_seed,
        cfg.stop_gradient as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&cfg.learning_rate.to_le_bytes());
    out.extend_from_slice(&cfg.momentum.to_le_bytes());
    for t in p.tensors() {
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        for v in t.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn decode_checkpoint(mut bytes: &[u8]) -> Result<(ModelParams<f32>, SeaConfig)> {
    let r = &mut bytes;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: "SEAM".into(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let mut fields = [0u32; 8];
    for f in fields.iter_mut() {
        *f = read_u32(r)?;
    }
    let cfg = SeaConfig {
        input_dim: fields[0] as usize,
        hidden_dim: fields[1] as usize,
        embed_dim: fields[2] as usize,
        chunk_frames: fields[3] as usize,
        pretrain_epochs: fields[4] as usize,
        sea_epochs: fields[5] as usize,
        rng_seed: fields[6],
        stop_gradient: fields[7] != 0,
        learning_rate: read_f64(r)?,
        momentum: read_f64(r)?,
    };
    cfg.validate()?;
    let mut params = ModelParams::<f32>::zeros(&cfg);
    for t in params.tensors_mut() {
        let rows = read_u32(r)? as usize;
        let cols = read_u32(r)? as usize;
        if (rows, cols) != t.shape() {
            return Err(Error::DimensionMismatch(format!(
                "checkpoint tensor is {rows}x{cols}, config implies {:?}",
                t.shape()
            )));
        }
        let mut raw = vec![0u8; rows * cols * 4];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        *t = Matrix::new(rows, cols, data)?;
    }
    if !r.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} trailing bytes after the last tensor",
            r.len()
        )));
    }
    Ok((params, cfg))
}

pub fn save_checkpoint(p: &ModelParams<f32>, cfg: &SeaConfig, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(p, cfg))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams<f32>, SeaConfig)> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    decode_checkpoint(&fs::read(path)?)
}
