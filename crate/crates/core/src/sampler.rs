//! Training batches built from a single radar trajectory.
//!
//! Augmentations are real neighbouring frames rather than synthetic
//! transforms, optionally combined with a cyclic azimuth shift:
//!
//! * `vR`: the augmentation is the instance itself, rotated;
//! * `vT`: the augmentation is a frame within `K_min` frames of the instance;
//! * `vTR`: as `vT`, then rotated;
//! * `vTR2`: half the batch are anchors, each paired with a second instance
//!   `K_min..=K_max` frames away; every instance is augmented as in `vTR`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::scan::{CartesianProjector, CartesianScan};
use crate::sim::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "vR")]
    VR,
    #[serde(rename = "vT")]
    VT,
    #[serde(rename = "vTR")]
    VTR,
    #[serde(rename = "vTR2")]
    VTR2,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::VR, Strategy::VT, Strategy::VTR, Strategy::VTR2];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::VR => "vR",
            Strategy::VT => "vT",
            Strategy::VTR => "vTR",
            Strategy::VTR2 => "vTR2",
        }
    }

    pub fn rotates(&self) -> bool {
        !matches!(self, Strategy::VT)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown sampling strategy {s:?} (expected vR, vT, vTR or vTR2)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub strategy: Strategy,
    pub batch_size: usize,
    pub d_min_s: f64,
    pub d_max_s: f64,
    pub seed: u64,
    /// Draw vTR2 augmentations `K_min..=K_max` frames away instead of within `K_min`.
    pub literal_vtr2_augmentation: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::VTR2,
            batch_size: 12,
            d_min_s: 2.0,
            d_max_s: 6.0,
            seed: 0,
            literal_vtr2_augmentation: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_min_s > 0.0 && self.d_min_s < self.d_max_s && self.d_max_s.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < d_min < d_max, got d_min={} d_max={}",
                self.d_min_s, self.d_max_s
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("batch_size must be at least 2".into()));
        }
        if self.strategy == Strategy::VTR2 && self.batch_size % 2 != 0 {
            return Err(Error::InvalidConfig("vTR2 needs an even batch_size".into()));
        }
        Ok(())
    }
}

/// Whole frames in `t` seconds.
pub fn seconds_to_frames(t: f64, frame_period: f64) -> Result<usize> {
    if !(frame_period > 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "cannot convert {t} s at a frame period of {frame_period} s"
        )));
    }
    // tolerate 0.6 / 0.2 = 2.9999999999999996
    Ok((t / frame_period + 1e-9).floor() as usize)
}

/// Frame indices and rotations of one batch, before any scan is touched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub instance_sources: Vec<usize>,
    pub augmentation_sources: Vec<usize>,
    /// Azimuth shift applied to each augmentation (0 when not rotated).
    pub rotations: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub instances: Vec<CartesianScan>,
    pub augmentations: Vec<CartesianScan>,
    pub plan: BatchPlan,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

pub struct BatchSampler {
    config: SamplerConfig,
    frames: usize,
    azimuths: usize,
    k_min: usize,
    k_max: usize,
    rng: StreamRng,
}

impl BatchSampler {
    pub fn new(config: SamplerConfig, traj: &Trajectory) -> Result<Self> {
        Self::for_shape(
            config,
            traj.len(),
            traj.frame_period(),
            traj.geometry().azimuths,
        )
    }

    /// Sampler over `frames` indices without a trajectory at hand.
    pub fn for_shape(
        config: SamplerConfig,
        frames: usize,
        frame_period: f64,
        azimuths: usize,
    ) -> Result<Self> {
        config.validate()?;
        if azimuths == 0 {
            return Err(Error::InvalidGeometry("zero azimuths".into()));
        }
        let k_min = seconds_to_frames(config.d_min_s, frame_period)?;
        let k_max = seconds_to_frames(config.d_max_s, frame_period)?;
        let required = 2 * k_max + 1;
        if frames < required || frames < config.batch_size {
            return Err(Error::TrajectoryTooShort {
                frames,
                required: required.max(config.batch_size),
            });
        }
        Ok(Self {
            config,
            frames,
            azimuths,
            k_min,
            k_max,
            rng: rng::stream(config.seed, "sampler", 0),
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// `(K_min, K_max)` in frames.
    pub fn offset_window(&self) -> (usize, usize) {
        (self.k_min, self.k_max)
    }

    pub fn plan(&mut self) -> Result<BatchPlan> {
        let m = self.config.batch_size;
        let instances = match self.config.strategy {
            Strategy::VTR2 => self.anchor_pairs()?,
            _ => rand::seq::index::sample(&mut self.rng, self.frames, m).into_vec(),
        };
        let (lo, hi) = match self.config.strategy {
            Strategy::VR => (0, 0),
            Strategy::VTR2 if self.config.literal_vtr2_augmentation => (self.k_min, self.k_max),
            _ => (0, self.k_min),
        };
        let mut augmentations = Vec::with_capacity(m);
        let mut rotations = Vec::with_capacity(m);
        for &i in &instances {
            augmentations.push(self.offset_from(i, lo, hi, &HashSet::new())?);
            rotations.push(if self.config.strategy.rotates() {
                self.rng.random_range(0..self.azimuths)
            } else {
                0
            });
        }
        Ok(BatchPlan {
            instance_sources: instances,
            augmentation_sources: augmentations,
            rotations,
        })
    }

    pub fn sample(&mut self, traj: &Trajectory, projector: &CartesianProjector) -> Result<Batch> {
        if traj.len() != self.frames {
            return Err(Error::Misaligned(format!(
                "sampler built for {} frames, trajectory has {}",
                self.frames,
                traj.len()
            )));
        }
        let plan = self.plan()?;
        let scans = traj.scans();
        let instances = plan
            .instance_sources
            .iter()
            .map(|&i| projector.project(&scans[i]))
            .collect::<Result<Vec<_>>>()?;
        let augmentations = plan
            .augmentation_sources
            .iter()
            .zip(&plan.rotations)
            .map(|(&i, &r)| projector.project_rotated(&scans[i], r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Batch {
            instances,
            augmentations,
            plan,
        })
    }

    /// Anchors interleaved with their paired negatives: `[a0, n0, a1, n1, ..]`.
    fn anchor_pairs(&mut self) -> Result<Vec<usize>> {
        let pairs = self.config.batch_size / 2;
        for _ in 0..100 {
            let anchors = rand::seq::index::sample(&mut self.rng, self.frames, pairs).into_vec();
            let mut used: HashSet<usize> = anchors.iter().copied().collect();
            let mut out = Vec::with_capacity(2 * pairs);
            for &a in &anchors {
                match self.offset_from(a, self.k_min, self.k_max, &used) {
                    Ok(n) => {
                        used.insert(n);
                        out.push(a);
                        out.push(n);
                    }
                    Err(_) => break,
                }
            }
            if out.len() == 2 * pairs {
                return Ok(out);
            }
        }
        Err(Error::TrajectoryTooShort {
            frames: self.frames,
            required: self.config.batch_size * (self.k_max + 1),
        })
    }

    /// `origin ± k` with `k` uniform in `lo..=hi` and a uniform sign,
    /// redrawn until the index is inside the trajectory and not excluded.
    fn offset_from(
        &mut self,
        origin: usize,
        lo: usize,
        hi: usize,
        exclude: &HashSet<usize>,
    ) -> Result<usize> {
        let valid =
            |c: i64| c >= 0 && (c as usize) < self.frames && !exclude.contains(&(c as usize));
        let o = origin as i64;
        if !(lo..=hi).any(|k| valid(o + k as i64) || valid(o - k as i64)) {
            return Err(Error::TrajectoryTooShort {
                frames: self.frames,
                required: hi + 1,
            });
        }
        loop {
            let k = self.rng.random_range(lo..=hi) as i64;
            let c = if self.rng.random_bool(0.5) {
                o + k
            } else {
                o - k
            };
            if valid(c) {
                return Ok(c as usize);
            }
        }
    }
}

/// One batch from a fresh sampler seeded by `cfg.seed`.
pub fn sample_batch(
    traj: &Trajectory,
    cfg: &SamplerConfig,
    projector: &CartesianProjector,
) -> Result<Batch> {
    BatchSampler::new(*cfg, traj)?.sample(traj, projector)
}
