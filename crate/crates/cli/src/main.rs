//! `rpr`: simulate drives, train encoders, embed scans and score retrieval.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rpr_core::config::RunConfig;
use rpr_core::embed::{
    embed_trajectory, load_embeddings, save_embeddings, EmbedMode, EmbeddingSet,
};
use rpr_core::encoder::{load_checkpoint, save_checkpoint};
use rpr_core::eval::{
    distance_matrix_with, evaluate, ring_key, write_distance_matrix, write_report, EvalReport,
    Metric, PredictionRule, Representation, DISTANCE_MATRIX_FILE,
};
use rpr_core::sampler::Strategy;
use rpr_core::sim::{
    load_trajectory, read_poses, save_trajectory, simulate, Pose, RouteKind, Trajectory,
};
use rpr_core::train::{train, write_loss_log};
use rpr_core::{Error, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.rpck";
pub const LOSS_LOG_FILE: &str = "loss.csv";

#[derive(Parser)]
#[command(
    name = "rpr",
    version,
    about = "Unsupervised radar place recognition toolkit"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; every flag overrides it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for rendering, embedding and distance rows.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Override any config key, e.g. `--set encoder.dropout=0.2`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a drive through the synthetic world into a trajectory directory.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// Noise stream; repeated drives through one world use different runs.
        #[arg(long)]
        run: Option<u64>,
        /// Emit exactly this many frames.
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        route: Option<RouteKind>,
    },
    /// Train an encoder on a trajectory.
    Train {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Embed every frame of a trajectory with a trained checkpoint.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, default_value = "point")]
        mode: EmbedMode,
        #[arg(long)]
        out: PathBuf,
        /// Stochastic passes per frame in family mode.
        #[arg(long)]
        samples: Option<usize>,
        /// Only frames `START:END` (half open).
        #[arg(long)]
        slice: Option<FrameSlice>,
    },
    /// Score query embeddings against map embeddings.
    Evaluate {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        query: PathBuf,
        /// `poses.csv` or a trajectory directory.
        #[arg(long)]
        map_poses: PathBuf,
        #[arg(long)]
        query_poses: PathBuf,
        #[arg(long)]
        map_slice: Option<FrameSlice>,
        #[arg(long)]
        query_slice: Option<FrameSlice>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metric: Option<Metric>,
        #[arg(long)]
        rule: Option<PredictionRule>,
        #[command(flatten)]
        report: ReportFlags,
    },
    /// Ring-key baseline computed straight from the scans.
    Baseline {
        /// Map trajectory directory.
        #[arg(long)]
        map: PathBuf,
        /// Query trajectory directory.
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        map_slice: Option<FrameSlice>,
        #[arg(long)]
        query_slice: Option<FrameSlice>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        report: ReportFlags,
    },
}

#[derive(Args)]
struct ReportFlags {
    /// Also report same-direction (rpt) and opposite-direction (rev) revisits.
    #[arg(long)]
    decompose: bool,
    /// Write the full query x map distance matrix as CSV.
    #[arg(long)]
    dump_distances: bool,
}

#[derive(Debug, Clone, Copy)]
struct FrameSlice {
    start: usize,
    end: Option<usize>,
}

impl std::str::FromStr for FrameSlice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("expected START:END, got {s:?}"))?;
        let start = if a.is_empty() {
            0
        } else {
            a.parse().map_err(|e| format!("{a:?}: {e}"))?
        };
        let end = if b.is_empty() {
            None
        } else {
            Some(b.parse().map_err(|e| format!("{b:?}: {e}"))?)
        };
        Ok(FrameSlice { start, end })
    }
}

impl FrameSlice {
    fn bounds(self, len: usize) -> Result<(usize, usize)> {
        let end = self.end.unwrap_or(len);
        if self.start >= end || end > len {
            return Err(Error::InvalidConfig(format!(
                "slice {}:{end} does not fit {len} frames",
                self.start
            )));
        }
        Ok((self.start, end))
    }
}

fn apply_slice<T: Clone>(items: Vec<T>, slice: Option<FrameSlice>) -> Result<Vec<T>> {
    match slice {
        None => Ok(items),
        Some(s) => {
            let (a, b) = s.bounds(items.len())?;
            Ok(items[a..b].to_vec())
        }
    }
}

fn slice_trajectory(traj: Trajectory, slice: Option<FrameSlice>) -> Result<Trajectory> {
    match slice {
        None => Ok(traj),
        Some(s) => {
            let (a, b) = s.bounds(traj.len())?;
            traj.slice(a, b)
        }
    }
}

/// Set `path` (dotted) in `table`, creating intermediate tables.
fn set_key(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts
        .pop()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| Error::InvalidConfig(format!("empty key in {path:?}")))?;
    let mut t = table;
    for p in parts {
        t = t
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("{p} in {path:?} is not a section")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

/// A TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

struct ConfigBuilder {
    table: toml::Table,
}

impl ConfigBuilder {
    fn new(common: &Common) -> Result<Self> {
        let mut table = match &common.config {
            Some(p) => fs::read_to_string(p)?
                .parse::<toml::Table>()
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?,
            None => toml::Table::new(),
        };
        for o in &common.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override {o:?} is not KEY=VALUE")))?;
            set_key(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let mut b = Self { table };
        if let Some(s) = common.seed {
            b.set("seed", s as i64)?;
        }
        Ok(b)
    }

    fn set(&mut self, key: &str, v: impl Into<toml::Value>) -> Result<()> {
        set_key(&mut self.table, key, v.into())
    }

    fn opt<V: Into<toml::Value>>(&mut self, key: &str, v: Option<V>) -> Result<()> {
        match v {
            Some(v) => self.set(key, v),
            None => Ok(()),
        }
    }

    fn resolve(self) -> Result<RunConfig> {
        let text = toml::to_string(&self.table).map_err(|e| Error::Format(e.to_string()))?;
        RunConfig::from_toml(&text)?.resolve()
    }
}

fn as_i64(v: usize) -> i64 {
    v as i64
}

fn load_poses(path: &Path) -> Result<Vec<Pose>> {
    let file = if path.is_dir() {
        path.join("poses.csv")
    } else {
        path.to_path_buf()
    };
    Ok(read_poses(file)?.1)
}

fn out_dir_of(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn finish_report(
    out: &Path,
    report: &EvalReport,
    dm: &rpr_core::eval::DistanceMatrix,
    flags: &ReportFlags,
) -> Result<()> {
    write_report(out, report)?;
    if flags.dump_distances {
        write_distance_matrix(out.join(DISTANCE_MATRIX_FILE), dm)?;
    }
    let mut line = format!(
        "R@1 {:.4}  R@P80 {:.4}  F1 {:.4}  AUC {:.4}",
        report.recall_at(1).unwrap_or(f64::NAN),
        report.recall_at_precision(80.0).unwrap_or(f64::NAN),
        report.f_scores.f1.value,
        report.f_scores.auc
    );
    for (name, sub) in [("rpt", &report.rpt), ("rev", &report.rev)] {
        if let Some(sub) = sub {
            line += &format!("  {name} R@1 {:.4}", sub.recall_at(1).unwrap_or(f64::NAN));
        }
    }
    println!("{line}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut b = ConfigBuilder::new(&cli.common)?;
    match cli.command {
        Command::Simulate {
            out,
            run,
            frames,
            route,
        } => {
            b.opt("run", run.map(|r| r as i64))?;
            b.opt("route.kind", route.map(|r| r.as_str()))?;
            let mut cfg = b.resolve()?;
            if let Some(n) = frames {
                cfg.route = cfg.route.with_frames(n);
                cfg.validate()?;
            }
            let t0 = Instant::now();
            let sim = cfg.simulation();
            let traj = simulate(&sim)?;
            save_trajectory(&out, &traj, &sim)?;
            cfg.write_resolved(&out)?;
            eprintln!(
                "simulated {} frames in {:.1}s",
                traj.len(),
                t0.elapsed().as_secs_f64()
            );
        }
        Command::Train {
            trajectory,
            out,
            strategy,
            epochs,
            lr,
            batch_size,
        } => {
            b.opt("sampler.strategy", strategy.map(|s| s.as_str()))?;
            b.opt("training.epochs", epochs.map(as_i64))?;
            b.opt("training.learning_rate", lr)?;
            b.opt("sampler.batch_size", batch_size.map(as_i64))?;
            let cfg = b.resolve()?;
            let traj = load_trajectory(&trajectory)?;
            fs::create_dir_all(&out)?;
            cfg.write_resolved(&out)?;
            let t0 = Instant::now();
            let outcome = train(
                &traj,
                &cfg.encoder,
                &cfg.sampler,
                &cfg.loss,
                &cfg.training,
                &mut |e, l| {
                    eprintln!(
                        "epoch {e:>3}  mean loss {l:.5}  ({:.0}s)",
                        t0.elapsed().as_secs_f64()
                    )
                },
            )?;
            save_checkpoint(out.join(CHECKPOINT_FILE), &outcome.params)?;
            write_loss_log(out.join(LOSS_LOG_FILE), &outcome.epoch_losses)?;
        }
        Command::Embed {
            checkpoint,
            trajectory,
            mode,
            out,
            samples,
            slice,
        } => {
            b.opt("inference.samples", samples.map(as_i64))?;
            let cfg = b.resolve()?;
            let params = load_checkpoint(&checkpoint)?;
            let traj = slice_trajectory(load_trajectory(&trajectory)?, slice)?;
            let set = embed_trajectory(&params, &traj, mode, cfg.inference.samples, cfg.seed)?;
            let dir = out_dir_of(&out);
            fs::create_dir_all(&dir)?;
            save_embeddings(&out, &set)?;
            cfg.write_resolved(&dir)?;
            eprintln!("embedded {} frames ({mode}, d={})", set.len(), set.dim());
        }
        Command::Evaluate {
            map,
            query,
            map_poses,
            query_poses,
            map_slice,
            query_slice,
            out,
            metric,
            rule,
            report,
        } => {
            b.opt("inference.metric", metric.map(|m| m.as_str()))?;
            b.opt("evaluation.prediction_rule", rule.map(|r| r.as_str()))?;
            if report.decompose {
                b.set("evaluation.decompose", true)?;
            }
            let cfg = b.resolve()?;
            let (map_set, query_set) = (load_embeddings(&map)?, load_embeddings(&query)?);
            let map_poses = apply_slice(load_poses(&map_poses)?, map_slice)?;
            let query_poses = apply_slice(load_poses(&query_poses)?, query_slice)?;
            for (what, set, poses) in [
                ("map", &map_set, &map_poses),
                ("query", &query_set, &query_poses),
            ] {
                if set.len() != poses.len() {
                    return Err(Error::Misaligned(format!(
                        "{what}: {} embeddings but {} poses",
                        set.len(),
                        poses.len()
                    )));
                }
            }
            // family embeddings default to the distributional metric
            let metric = match (metric, &map_set) {
                (Some(m), _) => m,
                (None, EmbeddingSet::Families(_)) => Metric::Kl,
                (None, _) => cfg.inference.metric,
            };
            let dm = distance_matrix_with(
                &query_set.to_representation(),
                &map_set.to_representation(),
                metric,
                cfg.inference.kl_mode,
            )?;
            let r = evaluate(&dm, &query_poses, &map_poses, &cfg.evaluation)?;
            fs::create_dir_all(&out)?;
            cfg.write_resolved(&out)?;
            finish_report(&out, &r, &dm, &report)?;
        }
        Command::Baseline {
            map,
            query,
            map_slice,
            query_slice,
            out,
            report,
        } => {
            if report.decompose {
                b.set("evaluation.decompose", true)?;
            }
            let cfg = b.resolve()?;
            let map = slice_trajectory(load_trajectory(&map)?, map_slice)?;
            let query = slice_trajectory(load_trajectory(&query)?, query_slice)?;
            let keys = |t: &Trajectory| {
                Representation::Points(
                    t.scans()
                        .iter()
                        .map(|s| ring_key(s).into_values())
                        .collect(),
                )
            };
            let dm = distance_matrix_with(
                &keys(&query),
                &keys(&map),
                Metric::Euclidean,
                cfg.inference.kl_mode,
            )?;
            let r = evaluate(&dm, query.poses(), map.poses(), &cfg.evaluation)?;
            fs::create_dir_all(&out)?;
            cfg.write_resolved(&out)?;
            finish_report(&out, &r, &dm, &report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.threads.max(1))
        .build_global()
    {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
