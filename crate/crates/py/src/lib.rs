//! Python bindings. Matrices cross the boundary as lists of rows of Python
//! `complex`; tensors as `(dims, data)` with `data` flattened first index
//! fastest.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use bdris_core::experiments::{self, noiseless_instance, Alignment, Instance as CoreInstance};
use bdris_core::identifiability::{self, Dims};
use bdris_core::receivers::ReceiverOutput;
use bdris_core::signal::add_noise;
use bdris_core::tensor::{self, ComplexTensor};
use bdris_core::{c64, ComplexMatrix, Error, Fixture, ReceiverKind, SystemConfig};

create_exception!(bdris, BdrisError, PyException);
create_exception!(bdris, IdentifiabilityError, BdrisError);

fn err(e: Error) -> PyErr {
    let msg = format!("[{}] {e}", e.category());
    match e {
        Error::Identifiability { .. } => IdentifiabilityError::new_err(msg),
        _ => BdrisError::new_err(msg),
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn to_py<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| BdrisError::new_err(e.to_string()))?;
    json_to_py(py, &text)
}

fn rows(m: &ComplexMatrix) -> Vec<Vec<c64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: Vec<Vec<c64>>) -> PyResult<ComplexMatrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(BdrisError::new_err("ragged matrix rows"));
    }
    Ok(ComplexMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

fn tensor_parts(t: &ComplexTensor) -> (Vec<usize>, Vec<c64>) {
    (t.dims().to_vec(), t.data().to_vec())
}

#[pyclass(name = "Config", module = "bdris", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: SystemConfig,
}

#[pymethods]
impl PyConfig {
    /// Parses flat `key = value` text and then applies `key=value` overrides.
    #[new]
    #[pyo3(signature = (text = "", overrides = Vec::new()))]
    fn new(text: &str, overrides: Vec<String>) -> PyResult<Self> {
        let inner = SystemConfig::parse(text, &overrides).map_err(err)?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, overrides = Vec::new()))]
    fn from_file(path: std::path::PathBuf, overrides: Vec<String>) -> PyResult<Self> {
        let inner = SystemConfig::from_file(&path, &overrides).map_err(err)?;
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    /// Copy with further overrides applied.
    fn with_overrides(&self, overrides: Vec<String>) -> PyResult<Self> {
        Self::new(&self.inner.to_text(), overrides)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn runs(&self) -> usize {
        self.inner.runs
    }

    #[getter]
    fn snr_db(&self) -> Vec<f64> {
        self.inner.snr_db.clone()
    }

    /// `(m_t, m_r, n, k, t, i)`.
    #[getter]
    fn dims(&self) -> (usize, usize, usize, usize, usize, usize) {
        let c = &self.inner;
        (c.m_t, c.m_r, c.n, c.k, c.t, c.i)
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "Config(m_t={}, m_r={}, n={}, q={}, k={}, t={}, i={}, seed={})",
            c.m_t, c.m_r, c.n, c.q, c.k, c.t, c.i, c.seed
        )
    }
}

#[pyclass(name = "Estimate", module = "bdris", skip_from_py_object)]
struct PyEstimate {
    inner: ReceiverOutput,
}

#[pymethods]
impl PyEstimate {
    #[getter]
    fn h_hat(&self) -> Vec<Vec<c64>> {
        rows(&self.inner.h_hat)
    }

    #[getter]
    fn hs_hat(&self) -> Vec<Vec<c64>> {
        rows(&self.inner.hs_hat)
    }

    #[getter]
    fn gbar_hat(&self) -> Vec<Vec<c64>> {
        rows(&self.inner.gbar_hat)
    }

    #[getter]
    fn x_hat(&self) -> Vec<Vec<c64>> {
        rows(&self.inner.x_hat)
    }

    #[getter]
    fn detected(&self) -> Option<Vec<Vec<usize>>> {
        self.inner.detected.clone()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn residual_trajectory(&self) -> Vec<f64> {
        self.inner.residual_trajectory.clone()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }
}

/// A generated (or recorded) instance: truth plus received tensor.
#[pyclass(name = "Instance", module = "bdris", skip_from_py_object)]
struct PyInstance {
    inner: CoreInstance,
}

#[pymethods]
impl PyInstance {
    /// Noiseless instance drawn from `seed`.
    #[staticmethod]
    fn generate(config: &PyConfig, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: noiseless_instance(&config.inner, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_fixture(text: &str) -> PyResult<Self> {
        let f = Fixture::from_json(text).map_err(err)?;
        Ok(Self {
            inner: f.instance().map_err(err)?,
        })
    }

    /// Copy with white Gaussian noise at `snr_db` added to the noiseless tensor.
    fn with_noise(&self, snr_db: f64, seed: u64) -> Self {
        let mut inner = self.inner.clone();
        inner.received = add_noise(&inner.received, snr_db, seed);
        Self { inner }
    }

    /// `(dims, data)` of the `M_R × T × K × I` received tensor.
    #[getter]
    fn y(&self) -> (Vec<usize>, Vec<c64>) {
        tensor_parts(&self.inner.received.y)
    }

    #[getter]
    fn achieved_snr_db(&self) -> Option<f64> {
        self.inner.received.achieved_snr_db
    }

    #[getter]
    fn h(&self) -> Vec<Vec<c64>> {
        rows(&self.inner.channels.h)
    }

    #[getter]
    fn hs(&self) -> Vec<Vec<c64>> {
        rows(&(&self.inner.channels.h * &self.inner.design.s))
    }

    #[getter]
    fn gbar(&self) -> Vec<Vec<c64>> {
        rows(&self.inner.channels.gbar)
    }

    #[getter]
    fn x(&self) -> Vec<Vec<c64>> {
        rows(&self.inner.symbols.x)
    }

    #[getter]
    fn symbol_indices(&self) -> Vec<Vec<usize>> {
        self.inner.symbols.indices.clone()
    }

    #[getter]
    fn s(&self) -> Vec<Vec<c64>> {
        rows(&self.inner.design.s)
    }

    #[getter]
    fn psi(&self) -> Vec<Vec<c64>> {
        rows(&self.inner.design.psi)
    }

    /// Runs `receiver` (`pakron`, `tucker` or `zf-oracle`) with the config's
    /// solver settings.
    fn run(&self, py: Python<'_>, receiver: &str, config: &PyConfig, seed: u64) -> PyResult<PyEstimate> {
        let kind: ReceiverKind = receiver.parse().map_err(err)?;
        let inner = py
            .detach(|| experiments::run_receiver(&self.inner, kind, &config.inner, seed))
            .map_err(err)?;
        Ok(PyEstimate { inner })
    }

    /// Runs and scores `receiver`; returns the trial record as a dict.
    fn score<'py>(
        &self,
        py: Python<'py>,
        receiver: &str,
        config: &PyConfig,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let kind: ReceiverKind = receiver.parse().map_err(err)?;
        let snr = self.inner.received.achieved_snr_db.unwrap_or(f64::INFINITY);
        let t = py
            .detach(|| experiments::score(&self.inner, kind, &config.inner, seed, snr, seed))
            .map_err(err)?;
        to_py(py, &t)
    }
}

/// Identifiability report for `config`.
#[pyfunction]
#[pyo3(signature = (config, rank_h = None))]
fn check<'py>(py: Python<'py>, config: &PyConfig, rank_h: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &identifiability::report(&config.inner, rank_h))
}

/// `(kmin_pakron, kmin_tucker)`.
#[pyfunction]
fn kmin_bounds(m_t: usize, m_r: usize, n: usize, t: usize, i: usize) -> (usize, usize) {
    let b = identifiability::kmin_bounds(Dims { m_t, m_r, n, k: 1, t, i });
    (b.kmin_pakron, b.kmin_tucker)
}

/// One seeded trial, as the `simulate` subcommand runs it.
#[pyfunction]
#[pyo3(signature = (config, receiver = "tucker", snr_index = 0, trial = 0))]
fn simulate<'py>(
    py: Python<'py>,
    config: &PyConfig,
    receiver: &str,
    snr_index: usize,
    trial: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let kind: ReceiverKind = receiver.parse().map_err(err)?;
    let t = py
        .detach(|| experiments::run_trial(&config.inner, snr_index, kind, trial))
        .map_err(err)?;
    to_py(py, &t)
}

/// Monte-Carlo sweep. Returns the report as a dict with an extra `trials`
/// list of per-trial records.
#[pyfunction]
#[pyo3(signature = (config, receivers = vec!["pakron".to_string(), "tucker".to_string()], jobs = 0))]
fn sweep<'py>(
    py: Python<'py>,
    config: &PyConfig,
    receivers: Vec<String>,
    jobs: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let kinds = receivers
        .iter()
        .map(|r| r.parse())
        .collect::<Result<Vec<ReceiverKind>, Error>>()
        .map_err(err)?;
    let rep = py
        .detach(|| experiments::run_sweep(&config.inner, &kinds, jobs))
        .map_err(err)?;
    let out = to_py(py, &rep)?;
    out.cast::<PyDict>()?.set_item("trials", to_py(py, &rep.trials)?)?;
    Ok(out)
}

/// Deterministic noiseless fixture as a JSON string.
#[pyfunction]
fn fixture(config: &PyConfig) -> PyResult<String> {
    Fixture::generate(&config.inner).and_then(|f| f.to_json()).map_err(err)
}

#[pyfunction]
fn kron(a: Vec<Vec<c64>>, b: Vec<Vec<c64>>) -> PyResult<Vec<Vec<c64>>> {
    Ok(rows(&tensor::kron(&matrix(a)?, &matrix(b)?)))
}

#[pyfunction]
fn khatri_rao(a: Vec<Vec<c64>>, b: Vec<Vec<c64>>) -> PyResult<Vec<Vec<c64>>> {
    Ok(rows(&tensor::khatri_rao(&matrix(a)?, &matrix(b)?).map_err(err)?))
}

#[pyfunction]
#[pyo3(signature = (a, tol = tensor::PINV_TOL))]
fn pinv(a: Vec<Vec<c64>>, tol: f64) -> PyResult<Vec<Vec<c64>>> {
    Ok(rows(&tensor::pinv(&matrix(a)?, tol).map_err(err)?))
}

/// Mode-`mode` unfolding of a `(dims, data)` tensor.
#[pyfunction]
fn unfold(dims: Vec<usize>, data: Vec<c64>, mode: usize) -> PyResult<Vec<Vec<c64>>> {
    let t = ComplexTensor::new(dims, data).map_err(err)?;
    Ok(rows(&tensor::unfold(&t, mode).map_err(err)?))
}

/// `mode` is `"per-column"` or `"global"`.
#[pyfunction]
#[pyo3(signature = (truth, estimate, mode = "per-column"))]
fn nmse_aligned(truth: Vec<Vec<c64>>, estimate: Vec<Vec<c64>>, mode: &str) -> PyResult<f64> {
    let mode = match mode {
        "per-column" => Alignment::PerColumn,
        "global" => Alignment::Global,
        other => return Err(BdrisError::new_err(format!("unknown alignment `{other}`"))),
    };
    experiments::nmse_aligned(&matrix(truth)?, &matrix(estimate)?, mode).map_err(err)
}

#[pymodule]
fn bdris(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("BdrisError", py.get_type::<BdrisError>())?;
    m.add("IdentifiabilityError", py.get_type::<IdentifiabilityError>())?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyInstance>()?;
    m.add_class::<PyEstimate>()?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(kmin_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(fixture, m)?)?;
    m.add_function(wrap_pyfunction!(kron, m)?)?;
    m.add_function(wrap_pyfunction!(khatri_rao, m)?)?;
    m.add_function(wrap_pyfunction!(pinv, m)?)?;
    m.add_function(wrap_pyfunction!(unfold, m)?)?;
    m.add_function(wrap_pyfunction!(nmse_aligned, m)?)?;
    Ok(())
}
