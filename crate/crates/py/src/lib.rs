//! Python bindings. Matrices cross the boundary as nested lists; reports as dicts.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use shs_core::analysis::{contraction, steady_state};
use shs_core::config::{matrix_to_rows, RunConfig, SystemSource};
use shs_core::experiments;
use shs_core::numerics::{Matrix, Tolerance};
use shs_core::observer::{design_observer, CoordinatedObserver};
use shs_core::shs::{scenarios_from_channels, ScenarioSet, SensorChannel};
use shs_core::sim::monte_carlo;
use shs_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Io(_) | Error::Parse(_) => PyValueError::new_err(e.to_string()),
        other => PyArithmeticError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

type Rows = Vec<Vec<f64>>;

/// A run configuration: system, sensor channels, observer design and simulation settings.
#[pyclass(name = "Config", module = "shs_py", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: RunConfig,
    base: PathBuf,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: RunConfig::from_json(text).map_err(py_err)?, base: PathBuf::from(".") })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = RunConfig::load(&path).map_err(py_err)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { inner, base })
    }

    /// One of the bundled experiment configs (fig3..fig8).
    #[staticmethod]
    fn canned(name: &str) -> PyResult<Self> {
        Ok(Self { inner: experiments::canned(name).map_err(py_err)?, base: PathBuf::from(".") })
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("serializable")
    }

    /// Labels of the expanded variants (`["base"]` when there are none).
    fn variants(&self) -> PyResult<Vec<String>> {
        Ok(self.inner.expand().map_err(py_err)?.into_iter().map(|(l, _)| l).collect())
    }

    /// The config with one variant applied.
    fn variant(&self, label: &str) -> PyResult<Self> {
        let (_, c) = self
            .inner
            .expand()
            .map_err(py_err)?
            .into_iter()
            .find(|(l, _)| l == label)
            .ok_or_else(|| PyValueError::new_err(format!("no variant {label:?}")))?;
        Ok(Self { inner: c, base: self.base.clone() })
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.sim.seed
    }

    #[setter]
    fn set_seed(&mut self, s: u64) {
        self.inner.sim.seed = s;
    }

    #[getter]
    fn replicas(&self) -> usize {
        self.inner.sim.replicas
    }

    #[setter]
    fn set_replicas(&mut self, r: usize) {
        self.inner.sim.replicas = r;
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.sim.k
    }

    #[setter]
    fn set_k(&mut self, k: usize) {
        self.inner.sim.k = k;
    }

    fn __repr__(&self) -> String {
        format!("Config(seed={}, replicas={}, k={})", self.inner.sim.seed, self.inner.sim.replicas, self.inner.sim.k)
    }
}

impl PyConfig {
    fn build(&self) -> PyResult<(CoordinatedObserver, ScenarioSet)> {
        let tol = Tolerance::default();
        let sys = self.inner.system(&self.base).map_err(py_err)?;
        let set = self.inner.scenario_set(&sys.state_labels).map_err(py_err)?;
        let obs = design_observer(&sys.a, &set, self.inner.observer_spec().map_err(py_err)?, &tol).map_err(py_err)?;
        Ok((obs, set))
    }
}

/// A designed coordinated observer together with its scenario set.
#[pyclass(name = "Observer", module = "shs_py")]
struct PyObserver {
    obs: CoordinatedObserver,
    set: ScenarioSet,
}

#[pymethods]
impl PyObserver {
    #[getter]
    fn n(&self) -> usize {
        self.obs.n()
    }

    /// Dimension of the stacked estimator state.
    #[getter]
    fn n_s(&self) -> usize {
        self.obs.n_s()
    }

    #[getter]
    fn tau(&self) -> f64 {
        self.obs.tau
    }

    #[getter]
    fn probabilities(&self) -> Vec<f64> {
        self.obs.probabilities.clone()
    }

    #[getter]
    fn a(&self) -> Rows {
        matrix_to_rows(&self.obs.a)
    }

    #[getter]
    fn f(&self) -> Rows {
        matrix_to_rows(&self.obs.f)
    }

    #[getter]
    fn phi(&self) -> Rows {
        matrix_to_rows(&self.obs.phi)
    }

    /// Per-scenario transition matrices of the stacked error.
    #[getter]
    fn lambdas(&self) -> Vec<Rows> {
        self.obs.lambda.iter().map(matrix_to_rows).collect()
    }

    /// Per-scenario decomposition: observable dimension, T, T⁻¹, gain and poles.
    fn scenario<'py>(&self, py: Python<'py>, index: usize) -> PyResult<Bound<'py, PyDict>> {
        let d = self
            .obs
            .decomps
            .iter()
            .find(|d| d.index == index)
            .ok_or_else(|| PyValueError::new_err(format!("no scenario {index}")))?;
        let out = PyDict::new(py);
        out.set_item("index", d.index)?;
        out.set_item("probability", self.set.scenarios[d.index - 1].probability)?;
        out.set_item("observable_dim", d.n_i)?;
        out.set_item("w", matrix_to_rows(&d.w))?;
        out.set_item("t", matrix_to_rows(&d.t))?;
        out.set_item("t_inv", matrix_to_rows(&d.t_inv))?;
        out.set_item("g", matrix_to_rows(&d.g))?;
        out.set_item("f", matrix_to_rows(&d.f))?;
        out.set_item("gain", d.gain.as_ref().map(matrix_to_rows))?;
        out.set_item("poles", d.poles.iter().map(|z| (z.re, z.im)).collect::<Vec<_>>())?;
        out.set_item("poles_truncated", d.poles_truncated)?;
        Ok(out)
    }

    /// Convergence report (contraction factors, sampling bound, mean-square stability).
    fn analyze<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &contraction(&self.obs, &self.set, &Tolerance::default()).map_err(py_err)?)
    }

    /// Steady-state error second moment. Raises ArithmeticError when unstable.
    fn steady_state<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = steady_state(&self.obs, &Tolerance::default()).map_err(py_err)?;
        let out = PyDict::new(py);
        out.set_item("mu_inf", s.mu_inf)?;
        out.set_item("mu_state", s.mu_state)?;
        out.set_item("mu_state_exact", s.mu_state_exact)?;
        out.set_item("w_inf", matrix_to_rows(&s.w_inf))?;
        out.set_item("residual", s.residual)?;
        Ok(out)
    }
}

/// Linearize a builtin grid (two_bus, ieee5, ieee33) or a grid JSON file.
#[pyfunction]
fn linearize<'py>(py: Python<'py>, grid: &str) -> PyResult<Bound<'py, PyDict>> {
    let src = if Path::new(grid).exists() { SystemSource::GridFile(grid.into()) } else { SystemSource::Grid(grid.into()) };
    let sys = RunConfig::for_system(src).system(Path::new(".")).map_err(py_err)?;
    let lin = sys.linearized.expect("grid sources are linearized");
    let out = PyDict::new(py);
    out.set_item("state_labels", lin.state_labels.clone())?;
    for (k, m) in [("a", &lin.a), ("b1", &lin.b1), ("b2", &lin.b2), ("d1", &lin.d1), ("d2", &lin.d2)] {
        out.set_item(k, matrix_to_rows(m))?;
    }
    out.set_item("equilibrium", to_py(py, &lin.equilibrium)?)?;
    Ok(out)
}

/// Probabilities of every delivery scenario for independent channels with the given delivery ratios.
#[pyfunction]
fn scenario_probabilities(rhos: Vec<f64>) -> PyResult<Vec<f64>> {
    let chans: Vec<SensorChannel> = rhos
        .iter()
        .enumerate()
        .map(|(k, &r)| SensorChannel { name: k.to_string(), row: vec![1.0], delivery_ratio: r, noise_std: 1.0 })
        .collect();
    Ok(scenarios_from_channels(&chans).map_err(py_err)?.probabilities())
}

/// Design the coordinated observer for a config.
#[pyfunction]
fn design(config: &PyConfig) -> PyResult<PyObserver> {
    let (obs, set) = config.build()?;
    Ok(PyObserver { obs, set })
}

/// Monte Carlo error trajectory. Releases the GIL while running.
#[pyfunction]
#[pyo3(signature = (config, replicas=None, k=None, seed=None))]
fn simulate<'py>(py: Python<'py>, config: &PyConfig, replicas: Option<usize>, k: Option<usize>, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = config.clone();
    if let Some(r) = replicas {
        cfg.inner.sim.replicas = r;
    }
    if let Some(k) = k {
        cfg.inner.sim.k = k;
    }
    if let Some(s) = seed {
        cfg.inner.sim.seed = s;
    }
    let (obs, set) = cfg.build()?;
    let sc = cfg.inner.sim_config(obs.n()).map_err(py_err)?;
    let t = py.detach(|| monte_carlo(&obs, &set, &sc)).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("t_seconds", (0..t.len()).map(|k| k as f64 * t.tau).collect::<Vec<_>>())?;
    out.set_item("mean_err_sq", t.mean_err_sq)?;
    out.set_item("var_err_sq", t.var_err_sq)?;
    out.set_item("mean_state_sq", t.mean_state_sq)?;
    Ok(out)
}

/// Run a bundled experiment and its behavioural checks.
#[pyfunction]
#[pyo3(signature = (name, seed=None, replicas=None))]
fn reproduce<'py>(py: Python<'py>, name: &str, seed: Option<u64>, replicas: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
    let rep = py.detach(|| experiments::reproduce(name, seed, replicas)).map_err(py_err)?;
    let v = to_py(py, &rep)?;
    v.set_item("passed", rep.passed())?;
    Ok(v)
}

/// Matrix exponential, exposed mainly for testing from Python.
#[pyfunction]
fn expm(a: Vec<Vec<f64>>, t: f64) -> PyResult<Rows> {
    let n = a.len();
    if a.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let m = Matrix::from_fn(n, n, |i, j| a[i][j]);
    Ok(matrix_to_rows(&shs_core::numerics::matrix_exponential(&m, t).map_err(py_err)?))
}

#[pymodule]
fn shs_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyObserver>()?;
    m.add_function(wrap_pyfunction!(linearize, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(design, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce, m)?)?;
    m.add_function(wrap_pyfunction!(expm, m)?)?;
    m.add("EXPERIMENTS", experiments::NAMES.to_vec())?;
    Ok(())
}
