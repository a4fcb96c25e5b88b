//! Scan embedding network.
//!
//! `conv → ReLU → pool` stages, global average pooling, a single dropout
//! layer (on the pooled features or on the last feature map just before
//! pooling), a linear head and L2 normalisation. Forward and backward passes are
//! written out by hand; all arithmetic is `f64`.

mod adam;
mod checkpoint;
mod layers;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scan::CartesianScan;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
};
pub use layers::PoolKind;

/// Where the dropout layer sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutPlacement {
    /// One unit per channel, after global average pooling.
    Pooled,
    /// One unit per activation of the last feature map, before pooling.
    FeatureMap,
}

use layers::{conv_backward, conv_forward, crop, pad, pool_backward, pool_forward, ConvShape};

/// Variance floor applied to embedding-family statistics.
pub const FAMILY_VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Cartesian input side W in pixels.
    pub input_side: usize,
    /// Metres per Cartesian input pixel.
    pub pixel_size_m: f64,
    pub widths: Vec<usize>,
    pub kernel: usize,
    pub pool: usize,
    pub pool_kind: PoolKind,
    pub embedding_dim: usize,
    pub dropout: f64,
    pub dropout_placement: DropoutPlacement,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_side: 32,
            pixel_size_m: 8.0,
            widths: vec![8, 16, 32],
            kernel: 3,
            pool: 2,
            pool_kind: PoolKind::Max,
            embedding_dim: 64,
            dropout: 0.5,
            dropout_placement: DropoutPlacement::FeatureMap,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.embedding_dim < 2 {
            return bad(format!(
                "embedding_dim must be >= 2, got {}",
                self.embedding_dim
            ));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("encoder needs at least one non-empty conv stage".into());
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return bad(format!("kernel must be odd, got {}", self.kernel));
        }
        if self.pool == 0 {
            return bad("pool factor must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout
            ));
        }
        if !(self.pixel_size_m > 0.0) {
            return bad(format!(
                "pixel size must be positive, got {}",
                self.pixel_size_m
            ));
        }
        let mut side = self.input_side;
        for _ in &self.widths {
            if side == 0 || side % self.pool != 0 {
                return bad(format!(
                    "input side {} is not divisible by pool factor {} at every stage",
                    self.input_side, self.pool
                ));
            }
            side /= self.pool;
        }
        if side == 0 {
            return bad("input too small for the number of stages".into());
        }
        Ok(())
    }

    /// Spatial side of each stage's convolution input.
    fn stage_sides(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.widths.len());
        let mut side = self.input_side;
        for _ in &self.widths {
            out.push(side);
            side /= self.pool;
        }
        out
    }

    fn final_side(&self) -> usize {
        self.input_side / self.pool.pow(self.widths.len() as u32)
    }

    fn channels_in(&self, stage: usize) -> usize {
        if stage == 0 {
            1
        } else {
            self.widths[stage - 1]
        }
    }

    fn feature_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Number of dropout units.
    pub fn dropout_units(&self) -> usize {
        match self.dropout_placement {
            DropoutPlacement::Pooled => self.feature_width(),
            DropoutPlacement::FeatureMap => {
                self.feature_width() * self.final_side() * self.final_side()
            }
        }
    }
}

/// Offsets of every tensor in the flat parameter vector, in declaration order:
/// per stage conv weight `[out, in, k, k]` then bias `[out]`; then the head
/// weight `[d, c_last]` and bias `[d]`.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    conv_w: Vec<usize>,
    conv_b: Vec<usize>,
    head_w: usize,
    head_b: usize,
    len: usize,
}

impl Layout {
    fn new(cfg: &EncoderConfig) -> Self {
        let mut off = 0;
        let mut conv_w = Vec::new();
        let mut conv_b = Vec::new();
        for (s, &c_out) in cfg.widths.iter().enumerate() {
            conv_w.push(off);
            off += c_out * cfg.channels_in(s) * cfg.kernel * cfg.kernel;
            conv_b.push(off);
            off += c_out;
        }
        let head_w = off;
        off += cfg.embedding_dim * cfg.feature_width();
        let head_b = off;
        off += cfg.embedding_dim;
        Self {
            conv_w,
            conv_b,
            head_w,
            head_b,
            len: off,
        }
    }
}

/// Network weights. `version` counts optimiser steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    config: EncoderConfig,
    layout: Layout,
    values: Vec<f64>,
    version: u64,
}

/// Parameter gradients, laid out like [`EncoderParams::values`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        Gradients(vec![0.0; params.values.len()])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, activations cached for backward.
    Train,
    /// Dropout bypassed.
    Eval,
    /// Dropout active, nothing cached.
    Stochastic,
}

/// L2-normalised embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// Normalise `raw` onto the unit sphere.
    pub fn from_raw(raw: &[f64]) -> Self {
        let norm = raw
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        Self {
            values: raw.iter().map(|v| v / norm).collect(),
        }
    }

    /// Wrap values that are already unit-norm (e.g. read from disk).
    pub fn from_unit(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Format(format!("embedding norm {norm} is not 1")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Per-dimension mean and variance of `samples` stochastic forward passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingFamily {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub samples: usize,
}

impl EmbeddingFamily {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>, samples: usize) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::DimensionMismatch(mean.len(), variance.len()));
        }
        if samples < 2 {
            return Err(Error::InvalidConfig(format!(
                "family needs >= 2 samples, got {samples}"
            )));
        }
        if variance.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidConfig(
                "family variance must be non-negative".into(),
            ));
        }
        Ok(Self {
            mean,
            variance,
            samples,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

struct StageCache {
    padded: Vec<f64>,
    /// Post-ReLU conv output.
    activated: Vec<f64>,
    argmax: Vec<u32>,
}

/// Activations retained by a training forward pass.
pub struct ActivationCache {
    version: u64,
    stages: Vec<StageCache>,
    /// Global-average-pooled features (after the mask when it acts on the
    /// feature map).
    pooled: Vec<f64>,
    /// Dropout multipliers: 0 or 1/(1-p).
    mask: Vec<f64>,
    raw: Vec<f64>,
    embedding: Vec<f64>,
}

impl ActivationCache {
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn dropout_mask(&self) -> &[f64] {
        &self.mask
    }

    /// Pre-normalisation head output.
    pub fn raw_output(&self) -> &[f64] {
        &self.raw
    }
}

/// Full output of one pass.
pub struct ForwardOutput {
    pub embedding: Embedding,
    pub raw: Vec<f64>,
    pub cache: Option<ActivationCache>,
}

impl EncoderParams {
    /// Seed-deterministic fan-in scaled uniform weights, zero biases.
    pub fn init(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut values = vec![0.0; layout.len];
        let mut rng = rng::stream(config.seed, "init", 0);
        let k2 = config.kernel * config.kernel;
        for (s, &c_out) in config.widths.iter().enumerate() {
            let fan_in = (config.channels_in(s) * k2) as f64;
            let w_bound = (6.0 / fan_in).sqrt();
            let w = layout.conv_w[s];
            for v in &mut values[w..w + c_out * config.channels_in(s) * k2] {
                *v = rng.random_range(-w_bound..w_bound);
            }
        }
        // biases start at zero: radar frames are mostly dark, and a random
        // bias of the same size as the inputs silences whole channels or
        // swamps the pooled features with a frame-independent offset
        let fan_in = config.feature_width() as f64;
        let bound = 1.0 / fan_in.sqrt();
        for v in &mut values[layout.head_w..layout.head_b] {
            *v = rng.random_range(-bound..bound);
        }
        Ok(Self {
            config,
            layout,
            values,
            version: 0,
        })
    }

    /// Rebuild from stored values (e.g. a checkpoint).
    pub fn from_values(config: EncoderConfig, values: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if values.len() != layout.len {
            return Err(Error::ShapeMismatch {
                expected: layout.len,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite parameter".into()));
        }
        Ok(Self {
            config,
            layout,
            values,
            version: 0,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Direct mutable access; bumps the version so cached activations go stale.
    pub fn values_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.values
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Draw a dropout mask for one forward pass.
    pub fn sample_dropout_mask<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let p = self.config.dropout;
        let n = self.config.dropout_units();
        if p == 0.0 {
            return vec![1.0; n];
        }
        let keep = 1.0 / (1.0 - p);
        (0..n)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect()
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        scan: &CartesianScan,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Embedding, Option<ActivationCache>)> {
        let out = match mode {
            Mode::Eval => self.forward_with_mask(scan, None, false)?,
            Mode::Stochastic => {
                let mask = self.sample_dropout_mask(rng);
                self.forward_with_mask(scan, Some(&mask), false)?
            }
            Mode::Train => {
                let mask = self.sample_dropout_mask(rng);
                self.forward_with_mask(scan, Some(&mask), true)?
            }
        };
        Ok((out.embedding, out.cache))
    }

    /// Forward pass with an explicit dropout mask (`None` bypasses dropout).
    pub fn forward_with_mask(
        &self,
        scan: &CartesianScan,
        mask: Option<&[f64]>,
        keep_cache: bool,
    ) -> Result<ForwardOutput> {
        let cfg = &self.config;
        if scan.side() != cfg.input_side {
            return Err(Error::ShapeMismatch {
                expected: cfg.input_side,
                actual: scan.side(),
            });
        }
        let c_last = cfg.feature_width();
        let units = cfg.dropout_units();
        if let Some(m) = mask {
            if m.len() != units {
                return Err(Error::ShapeMismatch {
                    expected: units,
                    actual: m.len(),
                });
            }
        }
        let half = cfg.kernel / 2;
        let mut x = scan.power().to_vec();
        let mut stages = Vec::with_capacity(cfg.widths.len());
        for (s, side) in cfg.stage_sides().into_iter().enumerate() {
            let c_in = cfg.channels_in(s);
            let c_out = cfg.widths[s];
            let shape = ConvShape {
                c_in,
                c_out,
                h: side,
                w: side,
                k: cfg.kernel,
            };
            let padded = pad(&x, c_in, side, side, half);
            let mut conv = vec![0.0; c_out * side * side];
            let w = self.layout.conv_w[s];
            let b = self.layout.conv_b[s];
            conv_forward(
                &shape,
                &padded,
                &self.values[w..b],
                &self.values[b..b + c_out],
                &mut conv,
            );
            for v in &mut conv {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let (pooled, argmax) = pool_forward(cfg.pool_kind, &conv, c_out, side, side, cfg.pool);
            x = pooled;
            if keep_cache {
                stages.push(StageCache {
                    padded,
                    activated: conv,
                    argmax,
                });
            }
        }
        let area = (cfg.final_side() * cfg.final_side()) as f64;
        let map_mask = match (mask, cfg.dropout_placement) {
            (Some(m), DropoutPlacement::FeatureMap) => Some(m),
            _ => None,
        };
        if let Some(m) = map_mask {
            for (v, k) in x.iter_mut().zip(m) {
                *v *= k;
            }
        }
        let pooled: Vec<f64> = x
            .chunks(x.len() / c_last)
            .map(|c| c.iter().sum::<f64>() / area)
            .collect();
        let dropped: Vec<f64> = match (mask, cfg.dropout_placement) {
            (Some(m), DropoutPlacement::Pooled) => {
                pooled.iter().zip(m).map(|(a, b)| a * b).collect()
            }
            _ => pooled.clone(),
        };
        let d = cfg.embedding_dim;
        let hw = self.layout.head_w;
        let hb = self.layout.head_b;
        let raw: Vec<f64> = (0..d)
            .map(|j| {
                let row = &self.values[hw + j * c_last..hw + (j + 1) * c_last];
                self.values[hb + j] + row.iter().zip(&dropped).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let embedding = Embedding::from_raw(&raw);
        let cache = keep_cache.then(|| ActivationCache {
            version: self.version,
            stages,
            pooled,
            mask: mask
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![1.0; units]),
            raw: raw.clone(),
            embedding: embedding.values.clone(),
        });
        Ok(ForwardOutput {
            embedding,
            raw,
            cache,
        })
    }

    /// `samples` stochastic passes summarised per dimension (pre-normalisation
    /// head outputs). Variance is the unbiased sample variance floored at
    /// [`FAMILY_VARIANCE_FLOOR`].
    pub fn forward_family<R: Rng + ?Sized>(
        &self,
        scan: &CartesianScan,
        samples: usize,
        rng: &mut R,
    ) -> Result<EmbeddingFamily> {
        if samples < 2 {
            return Err(Error::InvalidConfig(format!(
                "family needs >= 2 samples, got {samples}"
            )));
        }
        let d = self.config.embedding_dim;
        let mut mean = vec![0.0; d];
        let mut m2 = vec![0.0; d];
        for t in 0..samples {
            let mask = self.sample_dropout_mask(rng);
            let out = self.forward_with_mask(scan, Some(&mask), false)?;
            let k = (t + 1) as f64;
            for ((m, s), x) in mean.iter_mut().zip(&mut m2).zip(&out.raw) {
                let delta = x - *m;
                *m += delta / k;
                *s += delta * (x - *m);
            }
        }
        let variance = m2
            .iter()
            .map(|s| (s / (samples - 1) as f64).max(FAMILY_VARIANCE_FLOOR))
            .collect();
        EmbeddingFamily::new(mean, variance, samples)
    }

    /// Gradients of `upstream · f` w.r.t. every parameter, where `f` is the
    /// normalised embedding of the cached pass.
    pub fn backward(&self, cache: &ActivationCache, upstream: &[f64]) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(cache, upstream, &mut grads)?;
        Ok(grads)
    }

    /// Like [`backward`](Self::backward) but accumulates into `grads`.
    pub fn backward_into(
        &self,
        cache: &ActivationCache,
        upstream: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        if cache.version != self.version {
            return Err(Error::StaleCache {
                cache: cache.version,
                params: self.version,
            });
        }
        let cfg = &self.config;
        let d = cfg.embedding_dim;
        if upstream.len() != d {
            return Err(Error::ShapeMismatch {
                expected: d,
                actual: upstream.len(),
            });
        }
        if grads.0.len() != self.values.len() {
            return Err(Error::ShapeMismatch {
                expected: self.values.len(),
                actual: grads.0.len(),
            });
        }
        let g = &mut grads.0;
        // through L2 normalisation
        let f = &cache.embedding;
        let norm = cache
            .raw
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
            .max(f64::MIN_POSITIVE);
        let fg: f64 = f.iter().zip(upstream).map(|(a, b)| a * b).sum();
        let d_raw: Vec<f64> = upstream
            .iter()
            .zip(f)
            .map(|(u, fi)| (u - fi * fg) / norm)
            .collect();

        // head
        let c_last = cfg.feature_width();
        let hw = self.layout.head_w;
        let hb = self.layout.head_b;
        let pooled_mask = cfg.dropout_placement == DropoutPlacement::Pooled;
        let dropped: Vec<f64> = if pooled_mask {
            cache
                .pooled
                .iter()
                .zip(&cache.mask)
                .map(|(a, b)| a * b)
                .collect()
        } else {
            cache.pooled.clone()
        };
        let mut d_dropped = vec![0.0; c_last];
        for j in 0..d {
            let dz = d_raw[j];
            g[hb + j] += dz;
            let row_w = &self.values[hw + j * c_last..hw + (j + 1) * c_last];
            let row_g = &mut g[hw + j * c_last..hw + (j + 1) * c_last];
            for c in 0..c_last {
                row_g[c] += dz * dropped[c];
                d_dropped[c] += dz * row_w[c];
            }
        }
        let side = cfg.final_side();
        let area = (side * side) as f64;
        let mut d_x: Vec<f64> = if pooled_mask {
            d_dropped
                .iter()
                .zip(&cache.mask)
                .flat_map(|(dd, m)| std::iter::repeat_n(dd * m / area, side * side))
                .collect()
        } else {
            d_dropped
                .iter()
                .flat_map(|dd| std::iter::repeat_n(dd / area, side * side))
                .zip(&cache.mask)
                .map(|(g, m)| g * m)
                .collect()
        };

        let half = cfg.kernel / 2;
        let sides = cfg.stage_sides();
        for s in (0..cfg.widths.len()).rev() {
            let st = &cache.stages[s];
            let c_in = cfg.channels_in(s);
            let c_out = cfg.widths[s];
            let side = sides[s];
            let mut d_conv =
                pool_backward(cfg.pool_kind, &d_x, &st.argmax, c_out, side, side, cfg.pool);
            for (dv, a) in d_conv.iter_mut().zip(&st.activated) {
                if *a <= 0.0 {
                    *dv = 0.0;
                }
            }
            let shape = ConvShape {
                c_in,
                c_out,
                h: side,
                w: side,
                k: cfg.kernel,
            };
            let w = self.layout.conv_w[s];
            let b = self.layout.conv_b[s];
            let (g_w, g_rest) = g[w..].split_at_mut(b - w);
            let g_b = &mut g_rest[..c_out];
            if s > 0 {
                let mut d_padded = vec![0.0; st.padded.len()];
                conv_backward(
                    &shape,
                    &st.padded,
                    &self.values[w..b],
                    &d_conv,
                    g_w,
                    g_b,
                    Some(&mut d_padded),
                );
                d_x = crop(&d_padded, c_in, side, side, half);
            } else {
                conv_backward(
                    &shape,
                    &st.padded,
                    &self.values[w..b],
                    &d_conv,
                    g_w,
                    g_b,
                    None,
                );
            }
        }
        Ok(())
    }
}

/// One optimiser update. Non-finite gradients are rejected without touching
/// the parameters.
pub fn step(params: &mut EncoderParams, grads: &Gradients, opt: &mut Adam) -> Result<()> {
    if grads.0.len() != params.values.len() {
        return Err(Error::ShapeMismatch {
            expected: params.values.len(),
            actual: grads.0.len(),
        });
    }
    opt.step(&mut params.values, &grads.0)?;
    params.version += 1;
    debug_assert!(params.values.iter().all(|v| v.is_finite()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EncoderConfig {
        EncoderConfig {
            input_side: 8,
            widths: vec![2, 3],
            embedding_dim: 4,
            ..EncoderConfig::default()
        }
    }

    fn scan(side: usize, seed: u64) -> CartesianScan {
        let mut rng = rng::stream(seed, "scan", 0);
        CartesianScan::new(
            side,
            1.0,
            (0..side * side).map(|_| rng.random()).collect(),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig::default().validate().is_ok());
        let bad = [
            EncoderConfig {
                embedding_dim: 1,
                ..tiny()
            },
            EncoderConfig {
                widths: vec![],
                ..tiny()
            },
            EncoderConfig {
                dropout: 1.0,
                ..tiny()
            },
            EncoderConfig {
                input_side: 6,
                ..tiny()
            },
            EncoderConfig {
                kernel: 2,
                ..tiny()
            },
        ];
        for cfg in bad {
            assert!(EncoderParams::init(cfg).is_err());
        }
    }

    #[test]
    fn layout_counts_every_parameter() {
        let p = EncoderParams::init(EncoderConfig::default()).unwrap();
        let expected = (8 * 9 + 8) + (16 * 8 * 9 + 16) + (32 * 16 * 9 + 32) + (64 * 32 + 64);
        assert_eq!(p.len(), expected);
    }

    #[test]
    fn rejects_wrong_input_side() {
        let p = EncoderParams::init(tiny()).unwrap();
        let mut rng = rng::stream(0, "d", 0);
        assert!(matches!(
            p.forward(&scan(16, 0), Mode::Eval, &mut rng),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut p = EncoderParams::init(tiny()).unwrap();
        let mut rng = rng::stream(0, "d", 0);
        let (_, cache) = p.forward(&scan(8, 1), Mode::Train, &mut rng).unwrap();
        let cache = cache.unwrap();
        let mut opt = Adam::new(AdamConfig::default(), p.len());
        let zeros = Gradients::zeros_like(&p);
        step(&mut p, &zeros, &mut opt).unwrap();
        assert!(matches!(
            p.backward(&cache, &[0.0; 4]),
            Err(Error::StaleCache { .. })
        ));
    }

    #[test]
    fn only_train_mode_caches() {
        let p = EncoderParams::init(tiny()).unwrap();
        let mut rng = rng::stream(0, "d", 0);
        let x = scan(8, 2);
        assert!(p.forward(&x, Mode::Train, &mut rng).unwrap().1.is_some());
        assert!(p.forward(&x, Mode::Eval, &mut rng).unwrap().1.is_none());
        assert!(p
            .forward(&x, Mode::Stochastic, &mut rng)
            .unwrap()
            .1
            .is_none());
    }
}
