//! Training loop: sample a batch, embed it, back-propagate the contrastive
//! objective through the encoder and take one optimiser step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{step, Adam, AdamConfig, EncoderConfig, EncoderParams, Gradients, Mode};
use crate::error::{Error, Result};
use crate::loss::{batch_objective, objective_gradient, BatchEmbeddings, LossConfig};
use crate::rng;
use crate::sampler::{Batch, BatchSampler, SamplerConfig};
use crate::scan::{CartesianProjector, CartesianScan};
use crate::sim::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Optimiser steps per epoch; by default one pass worth of frames,
    /// `floor(frames / batch_size)`.
    pub steps_per_epoch: Option<usize>,
    /// Seeds the dropout masks drawn during training.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 3e-4,
            steps_per_epoch: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "bad learning rate {}",
                self.learning_rate
            )));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::InvalidConfig(
                "steps_per_epoch must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    /// Mean batch objective of every epoch.
    pub epoch_losses: Vec<f64>,
}

/// Objective value and parameter gradient for one batch.
pub fn batch_gradient(
    params: &EncoderParams,
    batch: &Batch,
    loss: &LossConfig,
    dropout_seed: u64,
    step_index: u64,
) -> Result<(f64, Gradients)> {
    let m = batch.len();
    let scans: Vec<&CartesianScan> = batch.instances.iter().chain(&batch.augmentations).collect();
    let passes = scans
        .par_iter()
        .enumerate()
        .map(|(k, scan)| {
            let mut r = rng::stream(
                dropout_seed,
                "dropout",
                step_index * 2 * m as u64 + k as u64,
            );
            params.forward(scan, Mode::Train, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<Vec<f64>> = passes.iter().map(|(e, _)| e.values().to_vec()).collect();
    let (inst, aug) = values.split_at(m);
    let be = BatchEmbeddings::new(inst.to_vec(), aug.to_vec())?;
    let j = batch_objective(&be, loss.temperature)?.total;
    let g = objective_gradient(&be, loss.temperature)?;
    let upstream: Vec<&Vec<f64>> = g.instances.iter().chain(&g.augmentations).collect();
    let parts = passes
        .par_iter()
        .zip(upstream.par_iter())
        .map(|((_, cache), up)| {
            let cache = cache.as_ref().expect("train-mode forward keeps its cache");
            params.backward(cache, up)
        })
        .collect::<Result<Vec<_>>>()?;
    // fixed summation order keeps results independent of thread count
    let mut total = Gradients::zeros_like(params);
    for p in parts {
        for (t, v) in total.0.iter_mut().zip(p.0) {
            *t += v;
        }
    }
    Ok((j, total))
}

pub fn train(
    traj: &Trajectory,
    encoder: &EncoderConfig,
    sampler: &SamplerConfig,
    loss: &LossConfig,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, f64),
) -> Result<TrainOutcome> {
    let params = EncoderParams::init(encoder.clone())?;
    train_from(params, traj, sampler, loss, cfg, on_epoch)
}

/// Continue training `params`; epochs are numbered from 1.
pub fn train_from(
    mut params: EncoderParams,
    traj: &Trajectory,
    sampler: &SamplerConfig,
    loss: &LossConfig,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(usize, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    loss.validate()?;
    let enc = params.config().clone();
    let geometry = traj.geometry();
    let projector = CartesianProjector::new(
        geometry.azimuths,
        geometry.bins,
        geometry.bin_size_m,
        enc.input_side,
        enc.pixel_size_m,
    )?;
    let mut sampler = BatchSampler::new(*sampler, traj)?;
    let steps = cfg
        .steps_per_epoch
        .unwrap_or_else(|| (traj.len() / sampler.config().batch_size).max(1));
    let mut opt = Adam::new(
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
        params.len(),
    );
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step_index = 0u64;
    for epoch in 1..=cfg.epochs {
        let mut sum = 0.0;
        for s in 0..steps {
            let batch = sampler.sample(traj, &projector)?;
            let (j, grads) = batch_gradient(&params, &batch, loss, cfg.seed, step_index)?;
            if !j.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step: s });
            }
            step(&mut params, &grads, &mut opt)?;
            sum += j;
            step_index += 1;
        }
        let mean = sum / steps as f64;
        on_epoch(epoch, mean);
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome {
        params,
        epoch_losses,
    })
}

pub const LOSS_LOG_HEADER: [&str; 2] = ["epoch", "mean_loss"];

pub fn write_loss_log(path: impl AsRef<std::path::Path>, losses: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(LOSS_LOG_HEADER)?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_log(path: impl AsRef<std::path::Path>) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            rec.get(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Format("bad loss log row".into()))
        })
        .collect()
}
