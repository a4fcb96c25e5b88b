//! Ground-truth labelling of query/database pairs from poses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GtLabel {
    Positive,
    Negative,
    /// Too close to call: a match onto it counts neither for nor against.
    Ignored,
    /// Removed from the candidate set altogether.
    Masked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthMatrix {
    rows: usize,
    cols: usize,
    labels: Vec<GtLabel>,
    boundary_m: f64,
    ignore_outer_m: Option<f64>,
}

impl GroundTruthMatrix {
    pub fn from_labels(
        rows: usize,
        cols: usize,
        labels: Vec<GtLabel>,
        boundary_m: f64,
    ) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(Error::Misaligned(format!(
                "{} labels for a {rows}x{cols} matrix",
                labels.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            labels,
            boundary_m,
            ignore_outer_m: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn boundary_m(&self) -> f64 {
        self.boundary_m
    }

    /// Outer edge of the ignore band, if one is in use.
    pub fn ignore_outer_m(&self) -> Option<f64> {
        self.ignore_outer_m
    }

    pub fn labels(&self) -> &[GtLabel] {
        &self.labels
    }

    pub fn get(&self, q: usize, c: usize) -> GtLabel {
        self.labels[q * self.cols + c]
    }

    pub fn row(&self, q: usize) -> &[GtLabel] {
        &self.labels[q * self.cols..(q + 1) * self.cols]
    }

    pub fn has_positive(&self, q: usize) -> bool {
        self.row(q).contains(&GtLabel::Positive)
    }

    pub fn count(&self, label: GtLabel) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }

    /// Keep only the positives selected by `keep`; every other positive is
    /// masked out of the candidate set.
    pub fn restricted_to(&self, keep: &[bool]) -> Result<Self> {
        if keep.len() != self.labels.len() {
            return Err(Error::Misaligned(format!(
                "{} mask entries for {} labels",
                keep.len(),
                self.labels.len()
            )));
        }
        let labels = self
            .labels
            .iter()
            .zip(keep)
            .map(|(&l, &k)| {
                if l == GtLabel::Positive && !k {
                    GtLabel::Masked
                } else {
                    l
                }
            })
            .collect();
        Ok(Self {
            labels,
            ..self.clone()
        })
    }
}

/// Label each pair by planar pose distance: `≤ boundary_m` positive, in
/// `(boundary_m, ignore_outer_m]` ignored, beyond that negative.
pub fn ground_truth_matrix(
    query_poses: &[Pose],
    db_poses: &[Pose],
    boundary_m: f64,
    ignore_outer_m: Option<f64>,
) -> Result<GroundTruthMatrix> {
    if !(boundary_m > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "boundary must be positive, got {boundary_m}"
        )));
    }
    if let Some(outer) = ignore_outer_m {
        if !(outer >= boundary_m) {
            return Err(Error::InvalidConfig(format!(
                "ignore band outer edge {outer} is inside the boundary {boundary_m}"
            )));
        }
    }
    let labels = query_poses
        .iter()
        .flat_map(|q| {
            db_poses.iter().map(move |c| {
                let d = q.distance(c);
                if d <= boundary_m {
                    GtLabel::Positive
                } else if ignore_outer_m.is_some_and(|o| d <= o) {
                    GtLabel::Ignored
                } else {
                    GtLabel::Negative
                }
            })
        })
        .collect();
    Ok(GroundTruthMatrix {
        rows: query_poses.len(),
        cols: db_poses.len(),
        labels,
        boundary_m,
        ignore_outer_m,
    })
}

pub const DEFAULT_HEADING_THRESHOLD_DEG: f64 = 45.0;

/// Split the positives into same-direction revisits (`rpt`, heading change
/// within `heading_threshold_deg`) and the rest (`rev`).
pub fn decompose(
    gt: &GroundTruthMatrix,
    query_poses: &[Pose],
    db_poses: &[Pose],
    heading_threshold_deg: f64,
) -> Result<(Vec<bool>, Vec<bool>)> {
    if query_poses.len() != gt.rows || db_poses.len() != gt.cols {
        return Err(Error::Misaligned(format!(
            "{}x{} poses for a {}x{} ground truth",
            query_poses.len(),
            db_poses.len(),
            gt.rows,
            gt.cols
        )));
    }
    let limit = heading_threshold_deg.to_radians();
    let mut rpt = vec![false; gt.labels.len()];
    let mut rev = vec![false; gt.labels.len()];
    for (q, qp) in query_poses.iter().enumerate() {
        for (c, cp) in db_poses.iter().enumerate() {
            let i = q * gt.cols + c;
            if gt.labels[i] != GtLabel::Positive {
                continue;
            }
            if qp.heading_difference(cp).abs() <= limit + 1e-12 {
                rpt[i] = true;
            } else {
                rev[i] = true;
            }
        }
    }
    Ok((rpt, rev))
}
