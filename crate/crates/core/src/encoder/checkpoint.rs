//! Checkpoint files.
//!
//! Layout (little-endian): magic `RPCK`, format version `u16`, then the
//! encoder config as `input_side u32`, `pixel_size_m f64`, `stages u32`,
//! `widths [u32; stages]`, `kernel u32`, `pool u32`, `pool_kind u8`
//! (0 max, 1 average), `embedding_dim u32`, `dropout f64`, `dropout_placement u8` (0 pooled,
//! 1 feature map), `seed u64`; then
//! `param_count u64` and that many `f32` values in declaration order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DropoutPlacement, EncoderConfig, EncoderParams, PoolKind};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RPCK";
const CHECKPOINT_VERSION: u16 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, params: &EncoderParams) -> Result<()> {
    let cfg = params.config();
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(cfg.input_side as u32).to_le_bytes())?;
    w.write_all(&cfg.pixel_size_m.to_le_bytes())?;
    w.write_all(&(cfg.widths.len() as u32).to_le_bytes())?;
    for &c in &cfg.widths {
        w.write_all(&(c as u32).to_le_bytes())?;
    }
    w.write_all(&(cfg.kernel as u32).to_le_bytes())?;
    w.write_all(&(cfg.pool as u32).to_le_bytes())?;
    w.write_all(&[match cfg.pool_kind {
        PoolKind::Max => 0u8,
        PoolKind::Average => 1u8,
    }])?;
    w.write_all(&(cfg.embedding_dim as u32).to_le_bytes())?;
    w.write_all(&cfg.dropout.to_le_bytes())?;
    w.write_all(&[match cfg.dropout_placement {
        DropoutPlacement::Pooled => 0u8,
        DropoutPlacement::FeatureMap => 1u8,
    }])?;
    w.write_all(&cfg.seed.to_le_bytes())?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(params.len() * 4);
    for &v in params.values() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array(r)?))
}

/// Parameters come back as the stored `f32` values widened to `f64`.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<EncoderParams> {
    let magic: [u8; 4] = read_array(&mut r)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = u16::from_le_bytes(read_array(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let input_side = read_u32(&mut r)? as usize;
    let pixel_size_m = read_f64(&mut r)?;
    let stages = read_u32(&mut r)? as usize;
    if stages > 64 {
        return Err(Error::Format(format!("implausible stage count {stages}")));
    }
    let widths = (0..stages)
        .map(|_| read_u32(&mut r).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let kernel = read_u32(&mut r)? as usize;
    let pool = read_u32(&mut r)? as usize;
    let pool_kind = match read_array::<1, _>(&mut r)?[0] {
        0 => PoolKind::Max,
        1 => PoolKind::Average,
        other => return Err(Error::Format(format!("unknown pool kind {other}"))),
    };
    let embedding_dim = read_u32(&mut r)? as usize;
    let dropout = read_f64(&mut r)?;
    let dropout_placement = match read_array::<1, _>(&mut r)?[0] {
        0 => DropoutPlacement::Pooled,
        1 => DropoutPlacement::FeatureMap,
        other => return Err(Error::Format(format!("unknown dropout placement {other}"))),
    };
    let seed = read_u64(&mut r)?;
    let config = EncoderConfig {
        input_side,
        pixel_size_m,
        widths,
        kernel,
        pool,
        pool_kind,
        embedding_dim,
        dropout,
        dropout_placement,
        seed,
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
    let count = read_u64(&mut r)? as usize;
    let mut bytes = vec![
        0u8;
        count
            .checked_mul(4)
            .ok_or_else(|| Error::Format("parameter count overflow".into()))?
    ];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    EncoderParams::from_values(config, values)
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &EncoderParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, params)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<EncoderParams> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
