//! Pairwise place distances between query and database representations.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{Embedding, EmbeddingFamily};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cosine,
    Euclidean,
    Kl,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
            Metric::Kl => "kl",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            "kl" => Ok(Metric::Kl),
            _ => Err(Error::InvalidConfig(format!("unknown metric {s:?}"))),
        }
    }
}

/// Direction of the Gaussian divergence used as a distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlMode {
    /// `½[KL(q‖c) + KL(c‖q)]`
    #[default]
    Symmetric,
    /// `KL(q‖c)`
    QueryToCandidate,
}

/// What is being compared: plain vectors or per-dimension Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    Points(Vec<Vec<f64>>),
    Families(Vec<EmbeddingFamily>),
}

impl Representation {
    pub fn from_embeddings(e: &[Embedding]) -> Self {
        Representation::Points(e.iter().map(|v| v.values().to_vec()).collect())
    }

    pub fn len(&self) -> usize {
        match self {
            Representation::Points(v) => v.len(),
            Representation::Families(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Representation::Points(_) => "points",
            Representation::Families(_) => "families",
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Representation::Points(v) => v.first().map(Vec::len),
            Representation::Families(v) => v.first().map(EmbeddingFamily::dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    metric: Metric,
}

impl DistanceMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, metric: Metric) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Misaligned(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig(
                "distances must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            values,
            metric,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, q: usize, c: usize) -> f64 {
        self.values[q * self.cols + c]
    }

    pub fn row(&self, q: usize) -> &[f64] {
        &self.values[q * self.cols..(q + 1) * self.cols]
    }

    /// Every entry multiplied by `k > 0`.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(
            self.rows,
            self.cols,
            self.values.iter().map(|v| v * k).collect(),
            self.metric,
        )
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `1 - cos(a, b)`, clamped at zero; equals `1 - aᵀb` for unit vectors.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot(a, b) / (na * nb)).max(0.0)
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `KL(N_a ‖ N_b)` for diagonal Gaussians.
pub fn kl_divergence(a: &EmbeddingFamily, b: &EmbeddingFamily) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    let mut acc = 0.0;
    for k in 0..a.dim() {
        let (va, vb) = (a.variance[k], b.variance[k]);
        let dm = a.mean[k] - b.mean[k];
        acc += (vb / va).ln() + (va + dm * dm) / vb - 1.0;
    }
    Ok((0.5 * acc).max(0.0))
}

/// Symmetrised divergence `½[KL(a‖b) + KL(b‖a)]`.
pub fn kl_similarity(a: &EmbeddingFamily, b: &EmbeddingFamily) -> Result<f64> {
    Ok(0.5 * (kl_divergence(a, b)? + kl_divergence(b, a)?))
}

pub fn distance_matrix(
    queries: &Representation,
    database: &Representation,
    metric: Metric,
) -> Result<DistanceMatrix> {
    distance_matrix_with(queries, database, metric, KlMode::default())
}

pub fn distance_matrix_with(
    queries: &Representation,
    database: &Representation,
    metric: Metric,
    kl_mode: KlMode,
) -> Result<DistanceMatrix> {
    if let (Some(a), Some(b)) = (queries.dim(), database.dim()) {
        if a != b {
            return Err(Error::DimensionMismatch(a, b));
        }
    }
    let (rows, cols) = (queries.len(), database.len());
    let values: Vec<f64> = match (queries, database, metric) {
        (
            Representation::Points(q),
            Representation::Points(db),
            Metric::Cosine | Metric::Euclidean,
        ) => {
            let f = if metric == Metric::Cosine {
                cosine_distance
            } else {
                euclidean_distance
            };
            let d = q[0].len();
            if q.iter().chain(db).any(|v| v.len() != d) {
                return Err(Error::InvalidConfig("ragged embedding dimensions".into()));
            }
            q.par_iter()
                .flat_map_iter(|a| db.iter().map(move |b| f(a, b)))
                .collect()
        }
        (Representation::Families(q), Representation::Families(db), Metric::Kl) => {
            let rows: Vec<Vec<f64>> = q
                .par_iter()
                .map(|a| {
                    db.iter()
                        .map(|b| match kl_mode {
                            KlMode::Symmetric => kl_similarity(a, b),
                            KlMode::QueryToCandidate => kl_divergence(a, b),
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<_>>()?;
            rows.into_iter().flatten().collect()
        }
        (q, _, _) => {
            let kind = if q.kind() != database.kind() {
                "mixed"
            } else {
                q.kind()
            };
            return Err(Error::MetricMismatch {
                metric: metric.as_str(),
                representation: kind,
            });
        }
    };
    DistanceMatrix::new(rows, cols, values, metric)
}
