//! Python bindings: `import rpr`.
//!
//! Scans and embeddings cross the boundary as nested lists of floats;
//! reports come back as plain dicts.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rpr_core::config::RunConfig;
use rpr_core::embed::{
    embed_trajectory, load_embeddings, save_embeddings, EmbedMode, EmbeddingSet,
};
use rpr_core::encoder::{
    load_checkpoint, save_checkpoint, Embedding, EmbeddingFamily, EncoderParams,
};
use rpr_core::eval::{
    distance_matrix_with, evaluate as evaluate_core, ring_key as ring_key_core, Metric,
    Representation,
};
use rpr_core::loss::{batch_objective, objective_gradient, BatchEmbeddings};
use rpr_core::scan::rotate_azimuth;
use rpr_core::sim::{load_trajectory, save_trajectory, simulate as simulate_core, Pose};
use rpr_core::{Error, Result as CoreResult};

fn py_err(e: Error) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for CoreResult<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn config_from(toml: Option<&str>) -> PyResult<RunConfig> {
    RunConfig::from_toml(toml.unwrap_or(""))
        .py()?
        .resolve()
        .py()
}

fn to_json_object(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Simulated drive: polar scans with ground-truth poses.
#[pyclass(name = "Trajectory", module = "rpr")]
struct PyTrajectory {
    inner: rpr_core::sim::Trajectory,
    config: RunConfig,
}

#[pymethods]
impl PyTrajectory {
    /// Load a trajectory directory written by `save` or `rpr simulate`.
    #[staticmethod]
    fn load(dir: &str) -> PyResult<Self> {
        let inner = load_trajectory(dir).py()?;
        let meta = rpr_core::sim::load_meta(dir).py()?;
        let config = RunConfig {
            seed: meta.sim.seed,
            run: meta.sim.run,
            world: meta.sim.world,
            route: meta.sim.route,
            geometry: meta.sim.geometry,
            noise: meta.sim.noise,
            ..RunConfig::default()
        };
        Ok(Self { inner, config })
    }

    fn save(&self, dir: &str) -> PyResult<()> {
        save_trajectory(dir, &self.inner, &self.config.simulation()).py()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(x, y, heading)` per frame.
    fn poses(&self) -> Vec<(f64, f64, f64)> {
        self.inner
            .poses()
            .iter()
            .map(|p| (p.x, p.y, p.heading))
            .collect()
    }

    /// Power of frame `i` as `azimuths` rows of `bins` values.
    fn scan(&self, i: usize) -> PyResult<Vec<Vec<f32>>> {
        let s = self
            .inner
            .scans()
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("frame {i} out of range")))?;
        Ok(s.power().chunks(s.bins()).map(|r| r.to_vec()).collect())
    }

    /// Frames `start..end` as a new trajectory.
    fn slice(&self, start: usize, end: usize) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.slice(start, end).py()?,
            config: self.config.clone(),
        })
    }

    /// Ring key of frame `i`, optionally after a cyclic azimuth shift.
    #[pyo3(signature = (i, shift = 0))]
    fn ring_key(&self, i: usize, shift: usize) -> PyResult<Vec<f64>> {
        let s = self
            .inner
            .scans()
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("frame {i} out of range")))?;
        Ok(ring_key_core(&rotate_azimuth(s, shift)).into_values())
    }
}

/// Render a drive. `config` is a TOML document; `frames` fixes the length.
#[pyfunction]
#[pyo3(signature = (config = None, frames = None, run = None))]
fn simulate(
    config: Option<&str>,
    frames: Option<usize>,
    run: Option<u64>,
) -> PyResult<PyTrajectory> {
    let mut cfg = config_from(config)?;
    if let Some(n) = frames {
        cfg.route = cfg.route.with_frames(n);
    }
    if let Some(r) = run {
        cfg.run = r;
    }
    cfg.validate().py()?;
    let inner = simulate_core(&cfg.simulation()).py()?;
    Ok(PyTrajectory { inner, config: cfg })
}

/// Trained (or freshly initialised) scan encoder.
#[pyclass(name = "Encoder", module = "rpr")]
struct PyEncoder {
    params: EncoderParams,
}

#[pymethods]
impl PyEncoder {
    /// Random initialisation from the `[encoder]` section of `config`.
    #[new]
    #[pyo3(signature = (config = None))]
    fn new(config: Option<&str>) -> PyResult<Self> {
        let cfg = config_from(config)?;
        Ok(Self {
            params: EncoderParams::init(cfg.encoder).py()?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            params: load_checkpoint(path).py()?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_checkpoint(path, &self.params).py()
    }

    #[getter]
    fn embedding_dim(&self) -> usize {
        self.params.config().embedding_dim
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.params.len()
    }

    /// Unit embeddings of every frame (eval mode).
    fn embed(&self, traj: &PyTrajectory) -> PyResult<Vec<Vec<f64>>> {
        match embed_trajectory(&self.params, &traj.inner, EmbedMode::Point, 0, 0).py()? {
            EmbeddingSet::Points(v) => Ok(v.into_iter().map(|e| e.values().to_vec()).collect()),
            EmbeddingSet::Families(_) => unreachable!(),
        }
    }

    /// `(means, variances)` of `samples` dropout passes per frame.
    #[pyo3(signature = (traj, samples = 24, seed = 0))]
    fn embed_family(
        &self,
        traj: &PyTrajectory,
        samples: usize,
        seed: u64,
    ) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        match embed_trajectory(&self.params, &traj.inner, EmbedMode::Family, samples, seed).py()? {
            EmbeddingSet::Families(v) => Ok(v.into_iter().map(|f| (f.mean, f.variance)).unzip()),
            EmbeddingSet::Points(_) => unreachable!(),
        }
    }
}

/// Train an encoder on `traj`; returns `(encoder, per-epoch mean loss)`.
#[pyfunction]
#[pyo3(signature = (traj, config = None))]
fn train(
    py: Python<'_>,
    traj: &PyTrajectory,
    config: Option<&str>,
) -> PyResult<(PyEncoder, Vec<f64>)> {
    let cfg = config_from(config)?;
    let t = traj.inner.clone();
    let out = py
        .detach(move || {
            rpr_core::train::train(
                &t,
                &cfg.encoder,
                &cfg.sampler,
                &cfg.loss,
                &cfg.training,
                &mut |_, _| {},
            )
        })
        .py()?;
    Ok((PyEncoder { params: out.params }, out.epoch_losses))
}

/// Contrastive objective `J` of instance embeddings `f` and augmentations `f_hat`.
#[pyfunction]
#[pyo3(signature = (f, f_hat, temperature = 0.1))]
fn objective(f: Vec<Vec<f64>>, f_hat: Vec<Vec<f64>>, temperature: f64) -> PyResult<f64> {
    let be = BatchEmbeddings::new(f, f_hat).py()?;
    Ok(batch_objective(&be, temperature).py()?.total)
}

/// `(dJ/df, dJ/df_hat)`.
#[pyfunction]
#[pyo3(signature = (f, f_hat, temperature = 0.1))]
fn objective_grad(
    f: Vec<Vec<f64>>,
    f_hat: Vec<Vec<f64>>,
    temperature: f64,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let be = BatchEmbeddings::new(f, f_hat).py()?;
    let g = objective_gradient(&be, temperature).py()?;
    Ok((g.instances, g.augmentations))
}

/// Symmetrised Gaussian KL between two `(mean, variance)` families.
#[pyfunction]
fn kl_similarity(a: (Vec<f64>, Vec<f64>), b: (Vec<f64>, Vec<f64>)) -> PyResult<f64> {
    let a = EmbeddingFamily::new(a.0, a.1, 2).py()?;
    let b = EmbeddingFamily::new(b.0, b.1, 2).py()?;
    rpr_core::eval::kl_similarity(&a, &b).py()
}

fn points(v: Vec<Vec<f64>>) -> Representation {
    Representation::Points(v)
}

fn poses(v: Vec<(f64, f64, f64)>) -> Vec<Pose> {
    v.into_iter().map(|(x, y, h)| Pose::new(x, y, h)).collect()
}

/// Full report for query/map embeddings (lists of vectors) and their
/// `(x, y, heading)` poses. `metric` is cosine, euclidean or kl; for kl pass
/// `(means, variances)` tuples instead of vectors.
#[pyfunction]
#[pyo3(signature = (query, map, query_poses, map_poses, metric = "cosine", decompose = false, config = None))]
#[allow(clippy::too_many_arguments)]
fn evaluate(
    py: Python<'_>,
    query: &Bound<'_, PyAny>,
    map: &Bound<'_, PyAny>,
    query_poses: Vec<(f64, f64, f64)>,
    map_poses: Vec<(f64, f64, f64)>,
    metric: &str,
    decompose: bool,
    config: Option<&str>,
) -> PyResult<Py<PyAny>> {
    let cfg = config_from(config)?;
    let metric: Metric = metric.parse().py()?;
    let rep = |o: &Bound<'_, PyAny>| -> PyResult<Representation> {
        if metric == Metric::Kl {
            let (m, v): (Vec<Vec<f64>>, Vec<Vec<f64>>) = o.extract()?;
            let fams = m
                .into_iter()
                .zip(v)
                .map(|(m, v)| EmbeddingFamily::new(m, v, 2))
                .collect::<CoreResult<Vec<_>>>()
                .py()?;
            Ok(Representation::Families(fams))
        } else {
            Ok(points(o.extract()?))
        }
    };
    let dm = distance_matrix_with(&rep(query)?, &rep(map)?, metric, cfg.inference.kl_mode).py()?;
    let mut eval_cfg = cfg.evaluation.clone();
    eval_cfg.decompose = decompose;
    let report = evaluate_core(&dm, &poses(query_poses), &poses(map_poses), &eval_cfg).py()?;
    let text = serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_json_object(py, &text)
}

/// Write unit-norm point embeddings in the binary embedding format.
#[pyfunction]
fn save_points(path: &str, embeddings: Vec<Vec<f64>>) -> PyResult<()> {
    let set = embeddings
        .into_iter()
        .map(Embedding::from_unit)
        .collect::<CoreResult<Vec<_>>>()
        .py()?;
    save_embeddings(path, &EmbeddingSet::Points(set)).py()
}

/// Read an embedding file: a list of vectors, or `(means, variances)`.
#[pyfunction]
fn load_embedding_file(py: Python<'_>, path: &str) -> PyResult<Py<PyAny>> {
    let d = PyDict::new(py);
    match load_embeddings(path).py()? {
        EmbeddingSet::Points(v) => {
            d.set_item("mode", "point")?;
            d.set_item(
                "values",
                v.into_iter()
                    .map(|e| e.values().to_vec())
                    .collect::<Vec<_>>(),
            )?;
        }
        EmbeddingSet::Families(v) => {
            d.set_item("mode", "family")?;
            let (m, var): (Vec<_>, Vec<_>) = v.into_iter().map(|f| (f.mean, f.variance)).unzip();
            d.set_item("means", m)?;
            d.set_item("variances", var)?;
        }
    }
    Ok(d.into_any().unbind())
}

/// Resolved run configuration (with defaults filled in) as TOML.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn resolve_config(config: Option<&str>) -> PyResult<String> {
    config_from(config)?.to_toml().py()
}

#[pymodule]
fn rpr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", rpr_core::VERSION)?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyEncoder>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(objective, m)?)?;
    m.add_function(wrap_pyfunction!(objective_grad, m)?)?;
    m.add_function(wrap_pyfunction!(kl_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(save_points, m)?)?;
    m.add_function(wrap_pyfunction!(load_embedding_file, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_config, m)?)?;
    Ok(())
}
