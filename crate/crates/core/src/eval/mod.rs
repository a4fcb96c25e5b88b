//! Retrieval evaluation: distances, ground truth, Recall@P / Recall@N,
//! F-scores and the split into same-direction and reverse revisits.

mod ground_truth;
mod metrics;
mod recall;
mod ring_key;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Pose;

pub use ground_truth::{
    decompose, ground_truth_matrix, GroundTruthMatrix, GtLabel, DEFAULT_HEADING_THRESHOLD_DEG,
};
pub use metrics::{
    cosine_distance, distance_matrix, distance_matrix_with, euclidean_distance, kl_divergence,
    kl_similarity, DistanceMatrix, KlMode, Metric, Representation,
};
pub use recall::{
    f_beta, f_scores_and_auc, nearest_candidate, pr_auc, pr_curve, recall_at_n, recall_at_n_table,
    recall_at_p, recall_at_precision, CurveSummary, FScore, PrPoint, PredictionRule,
};
pub use ring_key::{ring_key, RingKey, RING_AZIMUTHS, RING_BINS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub boundary_m: f64,
    /// Pairs between `boundary_m` and this distance are ignored; `None`
    /// labels everything beyond the boundary negative.
    pub ignore_outer_m: Option<f64>,
    pub precision_levels: Vec<f64>,
    pub max_n: usize,
    pub decompose: bool,
    pub heading_threshold_deg: f64,
    pub prediction_rule: PredictionRule,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            boundary_m: 25.0,
            ignore_outer_m: Some(50.0),
            precision_levels: vec![50.0, 80.0, 95.0, 98.0, 99.0],
            max_n: 25,
            decompose: false,
            heading_threshold_deg: DEFAULT_HEADING_THRESHOLD_DEG,
            prediction_rule: PredictionRule::NearestNeighbour,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.boundary_m > 0.0) {
            return Err(Error::InvalidConfig("boundary_m must be positive".into()));
        }
        if let Some(o) = self.ignore_outer_m {
            if !(o >= self.boundary_m) {
                return Err(Error::InvalidConfig(
                    "ignore_outer_m must not be inside boundary_m".into(),
                ));
            }
        }
        if self.max_n == 0 {
            return Err(Error::InvalidConfig("max_n must be at least 1".into()));
        }
        if self
            .precision_levels
            .iter()
            .any(|p| !(0.0..=100.0).contains(p))
        {
            return Err(Error::InvalidConfig(
                "precision levels are percentages in [0, 100]".into(),
            ));
        }
        if !(0.0..=180.0).contains(&self.heading_threshold_deg) {
            return Err(Error::InvalidConfig(
                "heading_threshold_deg must be in [0, 180]".into(),
            ));
        }
        Ok(())
    }

    pub fn mode_label(&self) -> String {
        match self.ignore_outer_m {
            Some(o) => format!("positive <= {} m, ignored <= {} m", self.boundary_m, o),
            None => format!("positive <= {} m", self.boundary_m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallAtP {
    pub precision_percent: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallAtN {
    pub n: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: Metric,
    pub ground_truth: String,
    pub prediction_rule: PredictionRule,
    pub queries: usize,
    pub database: usize,
    pub queries_with_positive: usize,
    pub positives: usize,
    pub recall_at_p: Vec<RecallAtP>,
    pub recall_at_n: Vec<RecallAtN>,
    pub f_scores: CurveSummary,
    pub pr_curve: Vec<PrPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rpt: Option<Box<EvalReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rev: Option<Box<EvalReport>>,
}

impl EvalReport {
    pub fn recall_at(&self, n: usize) -> Option<f64> {
        self.recall_at_n.iter().find(|r| r.n == n).map(|r| r.recall)
    }

    pub fn recall_at_precision(&self, percent: f64) -> Option<f64> {
        self.recall_at_p
            .iter()
            .find(|r| r.precision_percent == percent)
            .map(|r| r.recall)
    }
}

/// Every metric of the report for one ground truth.
pub fn report_for(
    dm: &DistanceMatrix,
    gt: &GroundTruthMatrix,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let curve = pr_curve(dm, gt, cfg.prediction_rule)?;
    let recall_at_p = cfg
        .precision_levels
        .iter()
        .map(|&p| RecallAtP {
            precision_percent: p,
            recall: recall_at_precision(&curve, p / 100.0),
        })
        .collect();
    let recall_at_n = recall_at_n_table(dm, gt, cfg.max_n)?
        .into_iter()
        .enumerate()
        .map(|(i, recall)| RecallAtN { n: i + 1, recall })
        .collect();
    Ok(EvalReport {
        metric: dm.metric(),
        ground_truth: cfg.mode_label(),
        prediction_rule: cfg.prediction_rule,
        queries: dm.rows(),
        database: dm.cols(),
        queries_with_positive: (0..gt.rows()).filter(|&q| gt.has_positive(q)).count(),
        positives: gt.count(GtLabel::Positive),
        recall_at_p,
        recall_at_n,
        f_scores: f_scores_and_auc(&curve)?,
        pr_curve: curve,
        rpt: None,
        rev: None,
    })
}

/// Ground truth from poses, the full report and, if configured, the
/// same-direction (`rpt`) and reverse (`rev`) sub-reports.
pub fn evaluate(
    dm: &DistanceMatrix,
    query_poses: &[Pose],
    db_poses: &[Pose],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if query_poses.len() != dm.rows() || db_poses.len() != dm.cols() {
        return Err(Error::Misaligned(format!(
            "{} query and {} database poses for a {}x{} distance matrix",
            query_poses.len(),
            db_poses.len(),
            dm.rows(),
            dm.cols()
        )));
    }
    let gt = ground_truth_matrix(query_poses, db_poses, cfg.boundary_m, cfg.ignore_outer_m)?;
    let mut report = report_for(dm, &gt, cfg)?;
    if cfg.decompose {
        let (rpt, rev) = decompose(&gt, query_poses, db_poses, cfg.heading_threshold_deg)?;
        report.rpt = Some(Box::new(report_for(dm, &gt.restricted_to(&rpt)?, cfg)?));
        report.rev = Some(Box::new(report_for(dm, &gt.restricted_to(&rev)?, cfg)?));
    }
    Ok(report)
}

pub const REPORT_FILE: &str = "report.json";
pub const PR_CURVE_FILE: &str = "pr_curve.csv";
pub const DISTANCE_MATRIX_FILE: &str = "distance_matrix.csv";

pub fn write_pr_curve(path: impl AsRef<Path>, curve: &[PrPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["threshold", "precision", "recall"])?;
    for p in curve {
        w.write_record([
            p.threshold.to_string(),
            p.precision.to_string(),
            p.recall.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Report as JSON plus the PR sweep as CSV (sub-reports get prefixed CSVs).
pub fn write_report(dir: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join(REPORT_FILE))?;
    serde_json::to_writer_pretty(&mut f, report).map_err(|e| Error::Format(e.to_string()))?;
    f.write_all(b"\n")?;
    write_pr_curve(dir.join(PR_CURVE_FILE), &report.pr_curve)?;
    for (name, sub) in [("rpt", &report.rpt), ("rev", &report.rev)] {
        if let Some(sub) = sub {
            write_pr_curve(dir.join(format!("{name}_{PR_CURVE_FILE}")), &sub.pr_curve)?;
        }
    }
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
}

/// One row per query, one column per database entry.
pub fn write_distance_matrix(path: impl AsRef<Path>, dm: &DistanceMatrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for q in 0..dm.rows() {
        w.write_record(dm.row(q).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
