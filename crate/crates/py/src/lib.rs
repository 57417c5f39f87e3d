//! Python bindings: simulation, preprocessing into compressed datasets,
//! losses, training and the value/frequency split of a single field.
//!
//! Fields cross the boundary as nested lists indexed `[i][j]`.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use reel_core::learn::{self, LearnError, PreprocessConfig, Sketching, ThetaInit, TrainConfig};
use reel_core::model::{build_model, DecomposableModel, ModelError, ModelKind};
use reel_core::sim::{self as core_sim, SimError};
use reel_core::spectral::{self, BetaRule};
use reel_core::{GridSpec, ScalarField};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sim_err(e: SimError) -> PyErr {
    match e {
        SimError::Divergence { .. } => PyArithmeticError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn learn_err(e: LearnError) -> PyErr {
    match e {
        LearnError::NonFinite { .. } => PyArithmeticError::new_err(e.to_string()),
        LearnError::Sim(s) => sim_err(s),
        other => value_err(other),
    }
}

fn model_err(e: ModelError) -> PyErr {
    value_err(e)
}

fn to_rows(f: &ScalarField) -> Vec<Vec<f64>> {
    let g = f.grid();
    (0..g.nx).map(|i| (0..g.ny).map(|j| f.at(i, j)).collect()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> PyResult<ScalarField> {
    let nx = rows.len();
    let ny = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ny) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let g = GridSpec::new(nx, ny, 1.0, 1.0).map_err(value_err)?;
    ScalarField::new(g, rows.concat()).map_err(value_err)
}

fn beta_rule(beta: Option<f64>, percentile: Option<f64>) -> PyResult<BetaRule> {
    let rule = match (beta, percentile) {
        (Some(_), Some(_)) => return Err(PyValueError::new_err("give beta or percentile, not both")),
        (Some(b), None) => BetaRule::Fixed(b),
        (None, Some(p)) => BetaRule::Percentile(p),
        (None, None) => BetaRule::Percentile(90.0),
    };
    rule.validate().map_err(value_err)?;
    Ok(rule)
}

/// Model configuration.
#[pyclass(name = "SimConfig", module = "reel", skip_from_py_object)]
#[derive(Clone)]
pub struct PySimConfig {
    inner: reel_core::model::SimConfig,
}

#[pymethods]
impl PySimConfig {
    /// Built-in configuration for `heat`, `sintering`, `sintering-lite` or `nanovoid`.
    #[staticmethod]
    #[pyo3(signature = (model, size = 32))]
    fn preset(model: &str, size: usize) -> PyResult<Self> {
        let kind: ModelKind = model.parse().map_err(model_err)?;
        Ok(Self {
            inner: reel_core::model::SimConfig::preset(kind, size),
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: reel_core::model::SimConfig::from_toml_str(text).map_err(model_err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    #[getter]
    fn model(&self) -> String {
        self.inner.model.id().to_string()
    }

    #[getter]
    fn nx(&self) -> usize {
        self.inner.nx
    }

    #[getter]
    fn ny(&self) -> usize {
        self.inner.ny
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }

    #[setter]
    fn set_steps(&mut self, v: usize) {
        self.inner.steps = v;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.seed = v;
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[setter]
    fn set_dt(&mut self, v: f64) {
        self.inner.dt = v;
    }

    fn param_names(&self) -> PyResult<Vec<String>> {
        Ok(build_model(&self.inner).map_err(model_err)?.param_names().to_vec())
    }

    fn true_theta(&self) -> PyResult<Vec<f64>> {
        Ok(build_model(&self.inner).map_err(model_err)?.true_theta().to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "SimConfig(model={:?}, nx={}, ny={}, steps={}, dt={}, seed={})",
            self.inner.model.id(),
            self.inner.nx,
            self.inner.ny,
            self.inner.steps,
            self.inner.dt,
            self.inner.seed
        )
    }
}

/// States of one simulation run.
#[pyclass(name = "Trajectory", module = "reel")]
pub struct PyTrajectory {
    inner: core_sim::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: core_sim::load(&path).map_err(sim_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        core_sim::save(&self.inner, &path).map_err(sim_err)
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.n_steps()
    }

    #[getter]
    fn model(&self) -> String {
        self.inner.model.id().to_string()
    }

    #[getter]
    fn field_names(&self) -> Vec<String> {
        self.inner.field_names.clone()
    }

    #[getter]
    fn param_names(&self) -> Vec<String> {
        self.inner.param_names.clone()
    }

    #[getter]
    fn theta_true(&self) -> Vec<f64> {
        self.inner.theta_true.clone()
    }

    fn config(&self) -> PyResult<PySimConfig> {
        Ok(PySimConfig {
            inner: self.inner.config().map_err(model_err)?,
        })
    }

    /// Field `name` at state `t` (0..=n_steps).
    fn field(&self, name: &str, t: usize) -> PyResult<Vec<Vec<f64>>> {
        let s = self
            .inner
            .states
            .get(t)
            .ok_or_else(|| PyValueError::new_err(format!("state {t} out of range")))?;
        Ok(to_rows(s.require(name).map_err(model_err)?))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Compressed (or raw) training data.
#[pyclass(name = "CompressedDataset", module = "reel")]
pub struct PyDataset {
    inner: learn::CompressedDataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: learn::load_cds(&path).map_err(learn_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        learn::save_cds(&self.inner, &path).map_err(learn_err)
    }

    #[getter]
    fn model(&self) -> String {
        self.inner.model.id().to_string()
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.n_steps()
    }

    #[getter]
    fn n_val(&self) -> usize {
        self.inner.val_spec.n
    }

    #[getter]
    fn n_freq(&self) -> usize {
        self.inner.freq_spec.n
    }

    #[getter]
    fn ratio(&self) -> f64 {
        self.inner.ratio
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn param_names(&self) -> Vec<String> {
        self.inner.param_names.clone()
    }

    #[getter]
    fn theta_true(&self) -> Vec<f64> {
        self.inner.theta_true.clone()
    }

    fn config(&self) -> PyResult<PySimConfig> {
        Ok(PySimConfig {
            inner: reel_core::model::SimConfig::from_toml_str(&self.inner.config_text).map_err(model_err)?,
        })
    }
}

impl PyDataset {
    fn model_obj(&self) -> PyResult<Box<dyn DecomposableModel>> {
        let cfg = reel_core::model::SimConfig::from_toml_str(&self.inner.config_text).map_err(model_err)?;
        build_model(&cfg).map_err(model_err)
    }
}

#[pyfunction]
fn simulate(py: Python<'_>, config: &PySimConfig) -> PyResult<PyTrajectory> {
    let cfg = config.inner.clone();
    let traj = py.detach(|| core_sim::simulate(&cfg)).map_err(sim_err)?;
    Ok(PyTrajectory { inner: traj })
}

/// Splits every per-step change and projects both parts.
#[pyfunction]
#[pyo3(signature = (traj, ratio = 0.1, seed = 0, beta = None, percentile = None, lam = 1.0))]
fn preprocess(
    py: Python<'_>,
    traj: &PyTrajectory,
    ratio: f64,
    seed: u64,
    beta: Option<f64>,
    percentile: Option<f64>,
    lam: f64,
) -> PyResult<PyDataset> {
    let cfg = PreprocessConfig {
        beta: beta_rule(beta, percentile)?,
        sketching: Sketching::Gaussian { ratio, seed },
        lambda: lam,
    };
    let model = build_model(&traj.inner.config().map_err(model_err)?).map_err(model_err)?;
    let cds = py
        .detach(|| learn::preprocess(&traj.inner, model.as_ref(), &cfg))
        .map_err(learn_err)?;
    Ok(PyDataset { inner: cds })
}

/// Uncompressed dataset for the plain squared-error baseline.
#[pyfunction]
fn raw_dataset(traj: &PyTrajectory) -> PyResult<PyDataset> {
    let model = build_model(&traj.inner.config().map_err(model_err)?).map_err(model_err)?;
    Ok(PyDataset {
        inner: learn::raw_dataset(&traj.inner, model.as_ref()).map_err(learn_err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (cds, theta, lam = None))]
fn loss(cds: &PyDataset, theta: Vec<f64>, lam: Option<f64>) -> PyResult<f64> {
    let model = cds.model_obj()?;
    learn::loss_reel(&cds.inner, model.as_ref(), &theta, lam.unwrap_or(cds.inner.lambda)).map_err(learn_err)
}

#[pyfunction]
#[pyo3(signature = (cds, theta, lam = None))]
fn grad(cds: &PyDataset, theta: Vec<f64>, lam: Option<f64>) -> PyResult<Vec<f64>> {
    let model = cds.model_obj()?;
    learn::grad_reel(&cds.inner, model.as_ref(), &theta, lam.unwrap_or(cds.inner.lambda)).map_err(learn_err)
}

/// Squared error of one-step predictions on the raw trajectory.
#[pyfunction]
fn loss_baseline(traj: &PyTrajectory, theta: Vec<f64>) -> PyResult<f64> {
    let model = build_model(&traj.inner.config().map_err(model_err)?).map_err(model_err)?;
    learn::loss_baseline(&theta, &traj.inner, model.as_ref()).map_err(learn_err)
}

/// Mini-batch SGD. Returns a dict with `theta`, `loss_history`,
/// `epoch_ms` and `lr`; `lr=None` searches the default grid first.
#[pyfunction]
#[pyo3(signature = (cds, epochs = 100, lr = None, batch_size = 32, seed = 0, lam = None, theta0 = None))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    cds: &PyDataset,
    epochs: usize,
    lr: Option<f64>,
    batch_size: usize,
    seed: u64,
    lam: Option<f64>,
    theta0: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let model = cds.model_obj()?;
    let base = TrainConfig {
        lr: lr.unwrap_or(0.0),
        epochs,
        batch_size,
        lambda: lam.unwrap_or(cds.inner.lambda),
        init: theta0.map_or(ThetaInit::Random, ThetaInit::Fixed),
        seed,
    };
    let res = py
        .detach(|| {
            let lr = match lr {
                Some(v) => v,
                None => learn::select_learning_rate(&cds.inner, model.as_ref(), &base, &learn::LR_GRID, 20)?.0,
            };
            learn::train(&cds.inner, model.as_ref(), &TrainConfig { lr, ..base })
        })
        .map_err(learn_err)?;
    let d = PyDict::new(py);
    d.set_item("theta", res.theta)?;
    d.set_item("theta_init", res.theta_init)?;
    d.set_item("loss_history", res.loss_history)?;
    d.set_item("epoch_ms", res.epoch_ms)?;
    d.set_item("lr", res.lr)?;
    Ok(d)
}

/// Mean squared rollout error per field over held-out initial conditions.
#[pyfunction]
#[pyo3(signature = (config, theta, ic_seeds, n_steps = 200))]
fn rollout_mse<'py>(
    py: Python<'py>,
    config: &PySimConfig,
    theta: Vec<f64>,
    ic_seeds: Vec<u64>,
    n_steps: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let model = build_model(&config.inner).map_err(model_err)?;
    let rep = py
        .detach(|| learn::evaluate_rollout_mse(&theta, model.as_ref(), &ic_seeds, n_steps))
        .map_err(learn_err)?;
    let d = PyDict::new(py);
    for (f, m) in rep.fields.iter().zip(&rep.mse) {
        d.set_item(f, *m)?;
    }
    Ok(d)
}

/// Value/frequency split of a field at magnitude threshold `beta`.
/// Returns `(value_part, frequency_part, kept_bins)`, both parts in real
/// space so that they sum to the input.
#[pyfunction]
fn vfdd(field: Vec<Vec<f64>>, beta: f64) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, usize)> {
    let f = from_rows(&field)?;
    let pair = spectral::vfdd(&f, beta).map_err(value_err)?;
    Ok((to_rows(&pair.s_val), to_rows(&spectral::idft2(&pair.s_freq)), pair.mask.count()))
}

/// Threshold at the given percentile of a field's DFT magnitudes.
#[pyfunction]
fn percentile_threshold(field: Vec<Vec<f64>>, p: f64) -> PyResult<f64> {
    let f = from_rows(&field)?;
    let rule = BetaRule::Percentile(p);
    rule.validate().map_err(value_err)?;
    Ok(rule.threshold(&spectral::dft2(&f)))
}

#[pymodule]
fn reel(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySimConfig>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(raw_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(loss, m)?)?;
    m.add_function(wrap_pyfunction!(grad, m)?)?;
    m.add_function(wrap_pyfunction!(loss_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(rollout_mse, m)?)?;
    m.add_function(wrap_pyfunction!(vfdd, m)?)?;
    m.add_function(wrap_pyfunction!(percentile_threshold, m)?)?;
    Ok(())
}
