//! Embedding a whole trajectory, and the embedding file format.
//!
//! Layout (little-endian): magic `RPEM`, format version `u16`, mode `u8`
//! (0 point, 1 family), `count u32`, `dim u32`, `samples u32` (0 in point
//! mode), then `count` records of `dim` `f64` values (point) or `dim` means
//! followed by `dim` variances (family).

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{Embedding, EmbeddingFamily, EncoderParams, Mode};
use crate::error::{Error, Result};
use crate::eval::Representation;
use crate::rng;
use crate::scan::CartesianProjector;
use crate::sim::Trajectory;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"RPEM";
const EMBEDDING_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMode {
    Point,
    Family,
}

impl fmt::Display for EmbedMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbedMode::Point => "point",
            EmbedMode::Family => "family",
        })
    }
}

impl FromStr for EmbedMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "point" => Ok(EmbedMode::Point),
            "family" => Ok(EmbedMode::Family),
            _ => Err(Error::InvalidConfig(format!(
                "unknown embedding mode {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingSet {
    Points(Vec<Embedding>),
    Families(Vec<EmbeddingFamily>),
}

impl EmbeddingSet {
    pub fn len(&self) -> usize {
        match self {
            EmbeddingSet::Points(v) => v.len(),
            EmbeddingSet::Families(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mode(&self) -> EmbedMode {
        match self {
            EmbeddingSet::Points(_) => EmbedMode::Point,
            EmbeddingSet::Families(_) => EmbedMode::Family,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            EmbeddingSet::Points(v) => v.first().map_or(0, Embedding::dim),
            EmbeddingSet::Families(v) => v.first().map_or(0, EmbeddingFamily::dim),
        }
    }

    pub fn to_representation(&self) -> Representation {
        match self {
            EmbeddingSet::Points(v) => Representation::from_embeddings(v),
            EmbeddingSet::Families(v) => Representation::Families(v.clone()),
        }
    }
}

pub fn projector_for(params: &EncoderParams, traj: &Trajectory) -> Result<CartesianProjector> {
    let g = traj.geometry();
    let cfg = params.config();
    CartesianProjector::new(
        g.azimuths,
        g.bins,
        g.bin_size_m,
        cfg.input_side,
        cfg.pixel_size_m,
    )
}

/// Embed every frame. Family mode draws `samples` dropout masks per frame
/// from a stream keyed by `seed` and the frame index.
pub fn embed_trajectory(
    params: &EncoderParams,
    traj: &Trajectory,
    mode: EmbedMode,
    samples: usize,
    seed: u64,
) -> Result<EmbeddingSet> {
    let projector = projector_for(params, traj)?;
    let frames: Vec<usize> = (0..traj.len()).collect();
    match mode {
        EmbedMode::Point => {
            let out = frames
                .par_iter()
                .map(|&i| {
                    let x = projector.project(&traj.scans()[i])?;
                    Ok(params.forward_with_mask(&x, None, false)?.embedding)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(EmbeddingSet::Points(out))
        }
        EmbedMode::Family => {
            let out = frames
                .par_iter()
                .map(|&i| {
                    let x = projector.project(&traj.scans()[i])?;
                    let mut r = rng::stream(seed, "inference", i as u64);
                    params.forward_family(&x, samples, &mut r)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(EmbeddingSet::Families(out))
        }
    }
}

/// Embeddings of each frame under `mode` (eval or stochastic).
pub fn embed_points(
    params: &EncoderParams,
    traj: &Trajectory,
    mode: Mode,
    seed: u64,
) -> Result<Vec<Embedding>> {
    let projector = projector_for(params, traj)?;
    (0..traj.len())
        .into_par_iter()
        .map(|i| {
            let x = projector.project(&traj.scans()[i])?;
            let mut r = rng::stream(seed, "inference", i as u64);
            Ok(params.forward(&x, mode, &mut r)?.0)
        })
        .collect()
}

fn put_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_embeddings<W: Write>(mut w: W, set: &EmbeddingSet) -> Result<()> {
    let (mode, samples) = match set {
        EmbeddingSet::Points(_) => (0u8, 0u32),
        EmbeddingSet::Families(v) => (1u8, v.first().map_or(0, |f| f.samples as u32)),
    };
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_all(&EMBEDDING_VERSION.to_le_bytes())?;
    w.write_all(&[mode])?;
    w.write_all(&(set.len() as u32).to_le_bytes())?;
    w.write_all(&(set.dim() as u32).to_le_bytes())?;
    w.write_all(&samples.to_le_bytes())?;
    let mut buf = Vec::new();
    match set {
        EmbeddingSet::Points(v) => v.iter().for_each(|e| put_f64s(&mut buf, e.values())),
        EmbeddingSet::Families(v) => v.iter().for_each(|f| {
            put_f64s(&mut buf, &f.mean);
            put_f64s(&mut buf, &f.variance);
        }),
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_exact<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn read_embeddings<R: Read>(mut r: R) -> Result<EmbeddingSet> {
    if &read_exact::<4, _>(&mut r)? != EMBEDDING_MAGIC {
        return Err(Error::Format("not an embedding file (bad magic)".into()));
    }
    let version = u16::from_le_bytes(read_exact(&mut r)?);
    if version != EMBEDDING_VERSION {
        return Err(Error::Format(format!(
            "unsupported embedding format version {version}"
        )));
    }
    let [mode] = read_exact::<1, _>(&mut r)?;
    let count = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let dim = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let samples = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    match mode {
        0 => (0..count)
            .map(|_| Embedding::from_unit(read_f64s(&mut r, dim)?))
            .collect::<Result<_>>()
            .map(EmbeddingSet::Points),
        1 => (0..count)
            .map(|_| {
                let mean = read_f64s(&mut r, dim)?;
                let variance = read_f64s(&mut r, dim)?;
                EmbeddingFamily::new(mean, variance, samples)
            })
            .collect::<Result<_>>()
            .map(EmbeddingSet::Families),
        m => Err(Error::Format(format!("unknown embedding mode byte {m}"))),
    }
}

pub fn save_embeddings(path: impl AsRef<Path>, set: &EmbeddingSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_embeddings(&mut w, set)?;
    w.flush()?;
    Ok(())
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    read_embeddings(BufReader::new(File::open(path)?))
}
