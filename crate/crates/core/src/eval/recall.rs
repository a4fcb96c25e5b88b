//! Threshold sweeps and top-N retrieval over a distance matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::ground_truth::{GroundTruthMatrix, GtLabel};
use super::metrics::DistanceMatrix;

/// How a swept threshold turns distances into predicted matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionRule {
    /// Each query predicts its single nearest candidate when that is within the threshold.
    #[default]
    NearestNeighbour,
    /// Every candidate within the threshold is a prediction.
    PerPair,
}

impl PredictionRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            PredictionRule::NearestNeighbour => "nearest_neighbour",
            PredictionRule::PerPair => "per_pair",
        }
    }
}

impl std::str::FromStr for PredictionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest_neighbour" | "nn" => Ok(PredictionRule::NearestNeighbour),
            "per_pair" | "pair" => Ok(PredictionRule::PerPair),
            _ => Err(Error::InvalidConfig(format!(
                "unknown prediction rule {s:?} (expected nearest_neighbour or per_pair)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    /// `-inf` for the anchor point; stored as `null` in JSON.
    #[serde(with = "anchor_threshold")]
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

mod anchor_threshold {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(t: &f64, s: S) -> Result<S::Ok, S::Error> {
        t.is_finite().then_some(*t).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

fn check_shapes(dm: &DistanceMatrix, gt: &GroundTruthMatrix) -> Result<()> {
    if dm.rows() != gt.rows() || dm.cols() != gt.cols() {
        return Err(Error::Misaligned(format!(
            "{}x{} distances against {}x{} ground truth",
            dm.rows(),
            dm.cols(),
            gt.rows(),
            gt.cols()
        )));
    }
    Ok(())
}

/// Nearest unmasked candidate of query `q`, ties going to the lower index.
pub fn nearest_candidate(dm: &DistanceMatrix, gt: &GroundTruthMatrix, q: usize) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (c, (&d, &l)) in dm.row(q).iter().zip(gt.row(q)).enumerate() {
        if l != GtLabel::Masked && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, c));
        }
    }
    best.map(|(_, c)| c)
}

fn precision(tp: usize, fp: usize) -> f64 {
    if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Sweep the threshold over every distinct distance that can change the
/// outcome. The curve starts with an anchor at `-inf` (no predictions:
/// precision 1, recall 0).
///
/// Recall is over queries with at least one positive (nearest-neighbour
/// rule) or over positive pairs (per-pair rule); ignored pairs are neither
/// true nor false positives.
pub fn pr_curve(
    dm: &DistanceMatrix,
    gt: &GroundTruthMatrix,
    rule: PredictionRule,
) -> Result<Vec<PrPoint>> {
    check_shapes(dm, gt)?;
    // (distance, label) of every prediction that can be made
    let mut events: Vec<(f64, GtLabel)> = Vec::new();
    let total = match rule {
        PredictionRule::NearestNeighbour => {
            for q in 0..dm.rows() {
                if let Some(c) = nearest_candidate(dm, gt, q) {
                    events.push((dm.get(q, c), gt.get(q, c)));
                }
            }
            (0..gt.rows()).filter(|&q| gt.has_positive(q)).count()
        }
        PredictionRule::PerPair => {
            for (&d, &l) in dm.values().iter().zip(gt.labels()) {
                if l != GtLabel::Masked {
                    events.push((d, l));
                }
            }
            gt.count(GtLabel::Positive)
        }
    };
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut curve = vec![PrPoint {
        threshold: f64::NEG_INFINITY,
        precision: 1.0,
        recall: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0;
        while i < events.len() && events[i].0 == t {
            match events[i].1 {
                GtLabel::Positive => tp += 1,
                GtLabel::Negative => fp += 1,
                GtLabel::Ignored | GtLabel::Masked => {}
            }
            i += 1;
        }
        curve.push(PrPoint {
            threshold: t,
            precision: precision(tp, fp),
            recall: ratio(tp, total),
        });
    }
    Ok(curve)
}

/// Best recall among curve points whose precision is at least `p` (a fraction).
pub fn recall_at_precision(curve: &[PrPoint], p: f64) -> f64 {
    curve
        .iter()
        .filter(|pt| pt.precision >= p)
        .map(|pt| pt.recall)
        .fold(0.0, f64::max)
}

/// Recall at a precision floor given in percent.
pub fn recall_at_p(
    dm: &DistanceMatrix,
    gt: &GroundTruthMatrix,
    p_percent: f64,
    rule: PredictionRule,
) -> Result<f64> {
    Ok(recall_at_precision(
        &pr_curve(dm, gt, rule)?,
        p_percent / 100.0,
    ))
}

/// Rank (0-based) of the first positive among query `q`'s unmasked
/// candidates, ordered by distance then index.
fn first_positive_rank(dm: &DistanceMatrix, gt: &GroundTruthMatrix, q: usize) -> Option<usize> {
    let row = dm.row(q);
    let labels = gt.row(q);
    let best = (0..row.len())
        .filter(|&c| labels[c] == GtLabel::Positive)
        .min_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)))?;
    let ahead = (0..row.len())
        .filter(|&c| {
            labels[c] != GtLabel::Masked
                && (row[c] < row[best] || (row[c] == row[best] && c < best))
        })
        .count();
    Some(ahead)
}

/// Fraction of queries (among those with a positive) whose `n` nearest
/// candidates include a positive. Zero when no query has a positive.
pub fn recall_at_n(dm: &DistanceMatrix, gt: &GroundTruthMatrix, n: usize) -> Result<f64> {
    Ok(recall_at_n_table(dm, gt, n)?.last().copied().unwrap_or(0.0))
}

/// `[Recall@1, .., Recall@n_max]` from a single ranking pass.
pub fn recall_at_n_table(
    dm: &DistanceMatrix,
    gt: &GroundTruthMatrix,
    n_max: usize,
) -> Result<Vec<f64>> {
    check_shapes(dm, gt)?;
    if n_max == 0 {
        return Err(Error::InvalidConfig("N must be at least 1".into()));
    }
    let mut hits = vec![0usize; n_max];
    let mut total = 0;
    for q in 0..dm.rows() {
        if let Some(rank) = first_positive_rank(dm, gt, q) {
            total += 1;
            for h in hits.iter_mut().skip(rank) {
                *h += 1;
            }
        }
    }
    Ok(hits.into_iter().map(|h| ratio(h, total)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FScore {
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub f_half: FScore,
    pub f1: FScore,
    pub f2: FScore,
    pub auc: f64,
}

pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / den
    }
}

fn best_f(curve: &[PrPoint], beta: f64) -> FScore {
    let mut best = FScore {
        value: f64::NEG_INFINITY,
        threshold: f64::NAN,
    };
    for pt in curve {
        let v = f_beta(pt.precision, pt.recall, beta);
        if v > best.value {
            best = FScore {
                value: v,
                threshold: pt.threshold,
            };
        }
    }
    best
}

/// Trapezoidal area under precision as a function of recall.
pub fn pr_auc(curve: &[PrPoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.recall, p.precision)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1))
        .sum()
}

/// Best `F_0.5`, `F_1`, `F_2` over the curve and the area under it.
pub fn f_scores_and_auc(curve: &[PrPoint]) -> Result<CurveSummary> {
    if curve.is_empty() {
        return Err(Error::InvalidConfig("empty precision-recall curve".into()));
    }
    Ok(CurveSummary {
        f_half: best_f(curve, 0.5),
        f1: best_f(curve, 1.0),
        f2: best_f(curve, 2.0),
        auc: pr_auc(curve),
    })
}
