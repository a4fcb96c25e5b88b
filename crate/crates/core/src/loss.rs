//! Instance-discrimination objective over a batch of instance/augmentation
//! embedding pairs.
//!
//! With `s(a, b) = aᵀb / τ`:
//!
//! * `P(i | x̂_i) = softmax_k s(f_k, f̂_i)` evaluated at `k = i`;
//! * `P(i | x_j) = softmax_k s(f_k, f_j)` evaluated at `k = i`, `j ≠ i`;
//! * `J = -Σ_i log P(i | x̂_i) - Σ_i Σ_{j≠i} log(1 - P(i | x_j))`.
//!
//! Everything is evaluated in log space; `log(1 - P)` is the log-sum-exp of
//! the softmax with the `i` term removed, minus the full log-sum-exp.

use serde::{Deserialize, Serialize};

use crate::encoder::Embedding;
use crate::error::{Error, Result};

pub const MIN_TEMPERATURE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub temperature: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { temperature: 0.1 }
    }
}

impl LossConfig {
    pub fn new(temperature: f64) -> Result<Self> {
        let cfg = Self { temperature };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= MIN_TEMPERATURE && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be >= {MIN_TEMPERATURE}, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Embeddings of the `m` instances and their `m` augmentations.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEmbeddings {
    instances: Vec<Vec<f64>>,
    augmentations: Vec<Vec<f64>>,
}

impl BatchEmbeddings {
    /// Shapes are checked; unit norm is the caller's business (the objective
    /// is defined for any vectors, which finite-difference checks rely on).
    pub fn new(instances: Vec<Vec<f64>>, augmentations: Vec<Vec<f64>>) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::InvalidConfig(
                "batch must hold at least one instance".into(),
            ));
        }
        if instances.len() != augmentations.len() {
            return Err(Error::Misaligned(format!(
                "{} instances but {} augmentations",
                instances.len(),
                augmentations.len()
            )));
        }
        let d = instances[0].len();
        for v in instances.iter().chain(&augmentations) {
            if v.len() != d {
                return Err(Error::DimensionMismatch(d, v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidConfig("non-finite embedding".into()));
            }
        }
        Ok(Self {
            instances,
            augmentations,
        })
    }

    pub fn from_embeddings(instances: &[Embedding], augmentations: &[Embedding]) -> Result<Self> {
        Self::new(
            instances.iter().map(|e| e.values().to_vec()).collect(),
            augmentations.iter().map(|e| e.values().to_vec()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[Vec<f64>] {
        &self.instances
    }

    pub fn augmentations(&self) -> &[Vec<f64>] {
        &self.augmentations
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Order-independent sum: permuting the inputs gives a bit-identical result.
fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + sorted_sum(values.map(|v| (v - max).exp()).collect()).ln()
}

/// Scaled similarity tables: `aug[k][i] = f_kᵀf̂_i/τ`, `inst[k][j] = f_kᵀf_j/τ`.
struct Logits {
    aug: Vec<Vec<f64>>,
    inst: Vec<Vec<f64>>,
}

impl Logits {
    fn new(be: &BatchEmbeddings, tau: f64) -> Self {
        let m = be.len();
        let f = &be.instances;
        let fh = &be.augmentations;
        let aug = (0..m)
            .map(|k| (0..m).map(|i| dot(&f[k], &fh[i]) / tau).collect())
            .collect();
        let inst = (0..m)
            .map(|k| (0..m).map(|j| dot(&f[k], &f[j]) / tau).collect())
            .collect();
        Self { aug, inst }
    }

    fn aug_column(&self, i: usize) -> impl Iterator<Item = f64> + Clone + '_ {
        self.aug.iter().map(move |row| row[i])
    }

    fn inst_column(&self, j: usize) -> impl Iterator<Item = f64> + Clone + '_ {
        self.inst.iter().map(move |row| row[j])
    }

    fn inst_column_without(&self, j: usize, skip: usize) -> impl Iterator<Item = f64> + Clone + '_ {
        self.inst
            .iter()
            .enumerate()
            .filter(move |(k, _)| *k != skip)
            .map(move |(_, row)| row[j])
    }

    fn log_p_aug(&self, i: usize) -> f64 {
        self.aug[i][i] - log_sum_exp(self.aug_column(i))
    }

    fn log_p_inst(&self, i: usize, j: usize) -> f64 {
        self.inst[i][j] - log_sum_exp(self.inst_column(j))
    }

    fn log_complement(&self, i: usize, j: usize) -> f64 {
        log_sum_exp(self.inst_column_without(j, i)) - log_sum_exp(self.inst_column(j))
    }
}

fn check_index(be: &BatchEmbeddings, i: usize) -> Result<()> {
    if i >= be.len() {
        return Err(Error::InvalidConfig(format!(
            "index {i} outside batch of {}",
            be.len()
        )));
    }
    Ok(())
}

/// `P(i | x̂_i)`: probability that augmentation `i` is recognised as instance `i`.
pub fn augmentation_probability(be: &BatchEmbeddings, i: usize, tau: f64) -> Result<f64> {
    check_index(be, i)?;
    LossConfig::new(tau)?;
    Ok(Logits::new(be, tau).log_p_aug(i).exp())
}

/// `P(i | x_j)`: probability that instance `j` is recognised as instance `i`.
pub fn instance_confusion_probability(
    be: &BatchEmbeddings,
    i: usize,
    j: usize,
    tau: f64,
) -> Result<f64> {
    check_index(be, i)?;
    check_index(be, j)?;
    if i == j {
        return Err(Error::InvalidConfig(
            "confusion probability needs i != j".into(),
        ));
    }
    LossConfig::new(tau)?;
    Ok(Logits::new(be, tau).log_p_inst(i, j).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub total: f64,
    /// `-Σ_i log P(i | x̂_i)`
    pub augmentation_term: f64,
    /// `-Σ_i Σ_{j≠i} log(1 - P(i | x_j))`
    pub confusion_term: f64,
}

pub fn batch_objective(be: &BatchEmbeddings, tau: f64) -> Result<ObjectiveValue> {
    LossConfig::new(tau)?;
    let m = be.len();
    let logits = Logits::new(be, tau);
    let augmentation_term = -sorted_sum((0..m).map(|i| logits.log_p_aug(i)).collect());
    let confusion_term = -sorted_sum(
        (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| logits.log_complement(i, j))
            .collect(),
    );
    Ok(ObjectiveValue {
        total: augmentation_term + confusion_term,
        augmentation_term,
        confusion_term,
    })
}

/// `∂J/∂f_i` and `∂J/∂f̂_i` for every batch entry.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradients {
    pub instances: Vec<Vec<f64>>,
    pub augmentations: Vec<Vec<f64>>,
}

fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn objective_gradient(be: &BatchEmbeddings, tau: f64) -> Result<BatchGradients> {
    LossConfig::new(tau)?;
    let m = be.len();
    let d = be.instances[0].len();
    let logits = Logits::new(be, tau);
    let f = &be.instances;
    let fh = &be.augmentations;

    // dJ/d aug[k][i]
    let mut a = vec![vec![0.0; m]; m];
    for i in 0..m {
        let col: Vec<f64> = logits.aug_column(i).collect();
        for (k, p) in softmax(&col).into_iter().enumerate() {
            a[k][i] = p - if k == i { 1.0 } else { 0.0 };
        }
    }
    // dJ/d inst[k][j]
    let mut c = vec![vec![0.0; m]; m];
    for j in 0..m {
        let col: Vec<f64> = logits.inst_column(j).collect();
        let full = softmax(&col);
        for k in 0..m {
            c[k][j] = (m - 1) as f64 * full[k];
        }
        for i in (0..m).filter(|&i| i != j) {
            let rest: Vec<f64> = col
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, v)| *v)
                .collect();
            let sm = softmax(&rest);
            for (k, p) in (0..m).filter(|&k| k != i).zip(sm) {
                c[k][j] -= p;
            }
        }
    }

    let mut g_inst = vec![vec![0.0; d]; m];
    let mut g_aug = vec![vec![0.0; d]; m];
    for k in 0..m {
        for i in 0..m {
            let w = a[k][i] / tau;
            for t in 0..d {
                g_inst[k][t] += w * fh[i][t];
                g_aug[i][t] += w * f[k][t];
            }
        }
        for j in 0..m {
            let w = c[k][j] / tau;
            for t in 0..d {
                g_inst[k][t] += w * f[j][t];
                g_inst[j][t] += w * f[k][t];
            }
        }
    }
    Ok(BatchGradients {
        instances: g_inst,
        augmentations: g_aug,
    })
}
