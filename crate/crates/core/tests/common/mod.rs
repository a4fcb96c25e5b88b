//! Brute-force oracles shared by the metric tests and the acceptance suite.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rpr_core::eval::{DistanceMatrix, GroundTruthMatrix, GtLabel, Metric, PrPoint};
use rpr_core::sim::Pose;

pub struct Instance {
    pub dm: DistanceMatrix,
    pub gt: GroundTruthMatrix,
}

/// Random labelled matrix up to `max_side` square. Distances are drawn from a
/// handful of levels so ties are common.
pub fn random_instance(seed: u64, max_side: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.random_range(1..=max_side);
    let cols = rng.random_range(1..=max_side);
    let levels = rng.random_range(2..12);
    let values = (0..rows * cols)
        .map(|_| rng.random_range(0..levels) as f64 * 0.25)
        .collect();
    let labels = (0..rows * cols)
        .map(|_| match rng.random_range(0..10) {
            0..=2 => GtLabel::Positive,
            3 => GtLabel::Ignored,
            4 => GtLabel::Masked,
            _ => GtLabel::Negative,
        })
        .collect();
    Instance {
        dm: DistanceMatrix::new(rows, cols, values, Metric::Euclidean).unwrap(),
        gt: GroundTruthMatrix::from_labels(rows, cols, labels, 25.0).unwrap(),
    }
}

fn unmasked(gt: &GroundTruthMatrix, q: usize) -> Vec<usize> {
    (0..gt.cols())
        .filter(|&c| gt.get(q, c) != GtLabel::Masked)
        .collect()
}

/// Nearest-neighbour rule evaluated separately at every matrix value.
pub fn oracle_recall_at_p(dm: &DistanceMatrix, gt: &GroundTruthMatrix, p_percent: f64) -> f64 {
    let with_pos = (0..gt.rows())
        .filter(|&q| (0..gt.cols()).any(|c| gt.get(q, c) == GtLabel::Positive))
        .count();
    let mut thresholds: Vec<f64> = dm.values().to_vec();
    thresholds.push(f64::NEG_INFINITY);
    let mut best: f64 = 0.0;
    for &t in &thresholds {
        let (mut tp, mut fp) = (0usize, 0usize);
        for q in 0..dm.rows() {
            let cands = unmasked(gt, q);
            let Some(&nn) = cands
                .iter()
                .min_by(|&&a, &&b| dm.get(q, a).total_cmp(&dm.get(q, b)).then(a.cmp(&b)))
            else {
                continue;
            };
            if dm.get(q, nn) <= t {
                match gt.get(q, nn) {
                    GtLabel::Positive => tp += 1,
                    GtLabel::Negative => fp += 1,
                    _ => {}
                }
            }
        }
        let precision = if tp + fp == 0 {
            1.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if with_pos == 0 {
            0.0
        } else {
            tp as f64 / with_pos as f64
        };
        if precision >= p_percent / 100.0 {
            best = best.max(recall);
        }
    }
    best
}

/// Sort each query's candidates and look at the first `n`.
pub fn oracle_recall_at_n(dm: &DistanceMatrix, gt: &GroundTruthMatrix, n: usize) -> f64 {
    let (mut hits, mut total) = (0, 0);
    for q in 0..dm.rows() {
        if !(0..gt.cols()).any(|c| gt.get(q, c) == GtLabel::Positive) {
            continue;
        }
        total += 1;
        let mut cands = unmasked(gt, q);
        cands.sort_by(|&a, &b| dm.get(q, a).total_cmp(&dm.get(q, b)).then(a.cmp(&b)));
        if cands
            .iter()
            .take(n)
            .any(|&c| gt.get(q, c) == GtLabel::Positive)
        {
            hits += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

pub fn oracle_labels(
    queries: &[Pose],
    db: &[Pose],
    inner: f64,
    outer: Option<f64>,
) -> Vec<GtLabel> {
    let mut out = Vec::new();
    for q in queries {
        for c in db {
            let d = ((q.x - c.x).powi(2) + (q.y - c.y).powi(2)).sqrt();
            out.push(if d <= inner {
                GtLabel::Positive
            } else if outer.is_some_and(|o| d <= o) {
                GtLabel::Ignored
            } else {
                GtLabel::Negative
            });
        }
    }
    out
}

/// `(F_0.5, F_1, F_2, AUC)` by direct enumeration of the curve.
pub fn oracle_f_and_auc(curve: &[PrPoint]) -> (f64, f64, f64, f64) {
    let f = |beta: f64| {
        curve
            .iter()
            .map(|p| {
                let b2 = beta * beta;
                if p.precision == 0.0 && p.recall == 0.0 {
                    0.0
                } else {
                    (1.0 + b2) * p.precision * p.recall / (b2 * p.precision + p.recall)
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.recall, p.precision)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut auc = 0.0;
    for i in 1..pts.len() {
        auc += (pts[i].0 - pts[i - 1].0) * 0.5 * (pts[i - 1].1 + pts[i].1);
    }
    (f(0.5), f(1.0), f(2.0), auc)
}

pub fn random_poses(rng: &mut impl Rng, n: usize, extent: f64) -> Vec<Pose> {
    (0..n)
        .map(|_| Pose {
            x: rng.random_range(-extent..extent),
            y: rng.random_range(-extent..extent),
            heading: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        })
        .collect()
}

/// `∫ p log(p/q)` for two 1-D normals by the midpoint rule over ±`span`.
pub fn numerical_kl_1d(mu1: f64, var1: f64, mu2: f64, var2: f64, span: f64, steps: usize) -> f64 {
    let pdf = |x: f64, mu: f64, var: f64| {
        (-(x - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    };
    let h = 2.0 * span / steps as f64;
    (0..steps)
        .map(|i| {
            let x = -span + (i as f64 + 0.5) * h;
            let (p, q) = (pdf(x, mu1, var1), pdf(x, mu2, var2));
            if p > 0.0 {
                p * (p / q).ln() * h
            } else {
                0.0
            }
        })
        .sum()
}
