//! One TOML document configuring every stage of a run.
//!
//! ```toml
//! seed = 0
//! run = 0
//!
//! [world]
//! n_scatterers = 1800
//! [route]
//! kind = "loop_reverse"
//! [sampler]
//! strategy = "vTR2"
//! [training]
//! epochs = 10
//! ```
//!
//! Every section is optional. The top-level `seed` is copied into every
//! component's seed when the config is resolved; components draw from
//! differently named streams of it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::eval::{EvalConfig, KlMode, Metric};
use crate::loss::LossConfig;
use crate::sampler::SamplerConfig;
use crate::sim::{NoiseSpec, RouteSpec, ScanGeometry, SimConfig, WorldSpec};
use crate::train::TrainConfig;
use crate::VERSION;

pub const RESOLVED_CONFIG_FILE: &str = "config.toml";
pub const VERSION_FILE: &str = "VERSION";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Dropout samples per frame in family mode.
    pub samples: usize,
    pub metric: Metric,
    pub kl_mode: KlMode,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            samples: 24,
            metric: Metric::Cosine,
            kl_mode: KlMode::Symmetric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Noise stream of the simulated drive.
    pub run: u64,
    pub world: WorldSpec,
    pub route: RouteSpec,
    pub geometry: ScanGeometry,
    pub noise: NoiseSpec,
    pub sampler: SamplerConfig,
    pub encoder: EncoderConfig,
    pub loss: LossConfig,
    pub training: TrainConfig,
    pub inference: InferenceConfig,
    pub evaluation: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Propagate the top-level seed and validate every section.
    pub fn resolve(mut self) -> Result<Self> {
        self.sampler.seed = self.seed;
        self.encoder.seed = self.seed;
        self.training.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.simulation().validate()?;
        self.sampler.validate()?;
        self.encoder.validate()?;
        self.loss.validate()?;
        self.training.validate()?;
        self.evaluation.validate()?;
        if self.inference.samples < 2 {
            return Err(Error::InvalidConfig(
                "inference.samples must be at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn simulation(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            run: self.run,
            world: self.world,
            route: self.route.clone(),
            geometry: self.geometry,
            noise: self.noise,
        }
    }

    /// Write the config as `config.toml` and the toolkit version as
    /// `VERSION` into `dir`.
    pub fn write_resolved(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join(RESOLVED_CONFIG_FILE), self.to_toml()?)?;
        fs::write(dir.join(VERSION_FILE), format!("rpr {VERSION}\n"))?;
        Ok(())
    }
}
