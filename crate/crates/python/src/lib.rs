//! Python bindings: models, ensembles, coupling, the irreducibility probe,
//! ergodicity helpers, matrix utilities and the config-driven runner.
//! Structured results are returned as plain dicts.

use std::path::PathBuf;

use jumperg::coupling::{estimate_tail, simulate_coupled_ensemble, CoupledEnsembleSpec, CouplingParams};
use jumperg::ergodic::{drift_ode_bound, drift_ode_closed_form};
use jumperg::experiment::{parse_config as parse, run_experiment as run};
use jumperg::girsanov::{irreducibility_probe as probe, ProbeSpec};
use jumperg::matops::{hs_norm as hs, lemma21_suite as suite, sqrt_psd as sqrt, Lemma21Suite, SymmetricMatrix};
use jumperg::model::families::{self, LinearParams, LogModulusParams, PolynomialParams};
use jumperg::model::{check_hypotheses as check, rho_delta as rho, CoefficientSet, Hypothesis, SamplerSpec};
use jumperg::sim::{simulate_ensemble, EnsembleSpec, PathEnsemble};
use jumperg::Error;
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Parameter { .. } | Error::Usage(_) | Error::Precondition(_) | Error::NotPsd { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// A coefficient set built from one of the built-in families.
#[pyclass(frozen)]
struct Model {
    inner: CoefficientSet,
}

#[pymethods]
impl Model {
    /// One-dimensional jump Ornstein-Uhlenbeck model.
    #[staticmethod]
    #[pyo3(signature = (theta=1.0, sigma=1.0, jump_rate=1.0))]
    fn jump_ou(theta: f64, sigma: f64, jump_rate: f64) -> PyResult<Self> {
        Ok(Model { inner: families::linear(LinearParams::jump_ou(theta, sigma, jump_rate)).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (dim=1, theta=1.0, sigma=1.0, jump_rate=1.0, jump_scale=1.0, jump_gain=0.0))]
    fn linear(dim: usize, theta: f64, sigma: f64, jump_rate: f64, jump_scale: f64, jump_gain: f64) -> PyResult<Self> {
        let p = LinearParams { dim, theta, sigma, jump_rate, jump_scale, jump_gain };
        Ok(Model { inner: families::linear(p).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (dim=1))]
    fn brownian(dim: usize) -> PyResult<Self> {
        Ok(Model { inner: families::brownian(dim).map_err(err)? })
    }

    /// `b(x) = -x|x|`, unit noise, uniform jumps.
    #[staticmethod]
    #[pyo3(signature = (jump_rate=1.0))]
    fn superlinear(jump_rate: f64) -> PyResult<Self> {
        Ok(Model { inner: families::polynomial_drift(PolynomialParams::superlinear(jump_rate)).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (dim=1, theta=1.0, eps=0.2, sigma=1.0, eta=0.2, c1=1.0, k=1.0, beta1=2.0, jump_rate=1.0, jump_scale=0.5))]
    #[allow(clippy::too_many_arguments)]
    fn log_modulus(
        dim: usize,
        theta: f64,
        eps: f64,
        sigma: f64,
        eta: f64,
        c1: f64,
        k: f64,
        beta1: f64,
        jump_rate: f64,
        jump_scale: f64,
    ) -> PyResult<Self> {
        let p = LogModulusParams { dim, theta, eps, sigma, eta, c1, k, beta1, jump_rate, jump_scale };
        Ok(Model { inner: families::log_modulus_perturbed(p).map_err(err)? })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label().to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Declared structural constants.
    fn constants(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, self.inner.constants())
    }

    fn drift(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dim(&x)?;
        Ok(self.inner.drift(&nalgebra::DVector::from_vec(x)).iter().copied().collect())
    }

    /// Audits the hypotheses (all by default) on a seeded point cloud.
    #[pyo3(signature = (seed=0, hypotheses=None))]
    fn check_hypotheses(&self, py: Python<'_>, seed: u64, hypotheses: Option<Vec<String>>) -> PyResult<Py<PyAny>> {
        let which: Vec<Hypothesis> = match hypotheses {
            None => Hypothesis::ALL.to_vec(),
            Some(names) => names
                .iter()
                .map(|n| Hypothesis::parse(n).ok_or_else(|| PyValueError::new_err(format!("unknown hypothesis {n}"))))
                .collect::<PyResult<_>>()?,
        };
        let report = py.detach(|| check(&self.inner, &which, &SamplerSpec::default(), seed)).map_err(err)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("Model({})", self.inner.label())
    }
}

impl Model {
    fn check_dim(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!("expected {} coordinates, got {}", self.inner.dim(), x.len())));
        }
        Ok(())
    }
}

/// Checkpoint states of independently seeded paths.
#[pyclass(frozen)]
struct Ensemble {
    inner: PathEnsemble,
}

#[pymethods]
impl Ensemble {
    #[getter]
    fn checkpoints(&self) -> Vec<f64> {
        self.inner.checkpoints.clone()
    }

    #[getter]
    fn n_paths(&self) -> usize {
        self.inner.n_paths()
    }

    /// Coordinate `k` of every path at checkpoint `t`.
    #[pyo3(signature = (t, k=0))]
    fn marginal(&self, t: f64, k: usize) -> PyResult<Vec<f64>> {
        self.inner.marginal(t, k).map_err(err)
    }

    /// Mean and standard error of coordinate `k` at `t`.
    #[pyo3(signature = (t, k=0))]
    fn mean(&self, t: f64, k: usize) -> PyResult<(f64, f64)> {
        let e = self.inner.expectation(t, |x| x[k]).map_err(err)?;
        Ok((e.value, e.stderr))
    }

    /// Mean and standard error of `|X_t|^2`.
    fn second_moment(&self, t: f64) -> PyResult<(f64, f64)> {
        let e = self.inner.expectation(t, |x| x.iter().map(|v| v * v).sum()).map_err(err)?;
        Ok((e.value, e.stderr))
    }
}

/// Simulates `n_paths` paths from `x0`; path `i` depends only on `(seed, i)`.
#[pyfunction]
#[pyo3(signature = (model, x0, horizon, dt, n_paths, seed, checkpoints=None))]
fn simulate(
    py: Python<'_>,
    model: &Model,
    x0: Vec<f64>,
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
    checkpoints: Option<Vec<f64>>,
) -> PyResult<Ensemble> {
    let spec = EnsembleSpec::new(x0, horizon, dt, n_paths, seed).with_checkpoints(checkpoints.unwrap_or_default());
    let inner = py.detach(|| simulate_ensemble(&model.inner, &spec)).map_err(err)?;
    Ok(Ensemble { inner })
}

/// `P(tau > t)` with Wilson intervals for reflection-coupled pairs.
#[pyfunction]
#[pyo3(signature = (model, x0, y0, delta, horizon, dt, n_paths, seed, times=None))]
#[allow(clippy::too_many_arguments)]
fn coupling_tail(
    py: Python<'_>,
    model: &Model,
    x0: Vec<f64>,
    y0: Vec<f64>,
    delta: f64,
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
    times: Option<Vec<f64>>,
) -> PyResult<Py<PyAny>> {
    let params = CouplingParams::new(x0, y0, delta).map_err(err)?;
    let times = times.unwrap_or_else(|| vec![horizon]);
    let spec = CoupledEnsembleSpec::new(horizon, dt, n_paths, seed).with_checkpoints(times.clone());
    let tails = py
        .detach(|| {
            let ens = simulate_coupled_ensemble(&model.inner, &params, &spec)?;
            times.iter().map(|&t| estimate_tail(&ens, t)).collect::<jumperg::Result<Vec<_>>>()
        })
        .map_err(err)?;
    to_py(py, &tails)
}

/// Importance-sampled probability of hitting the ball `B(target, radius)` at `horizon`.
#[pyfunction]
#[pyo3(signature = (model, x0, target, radius, horizon, n_paths, seed))]
#[allow(clippy::too_many_arguments)]
fn irreducibility_probe(
    py: Python<'_>,
    model: &Model,
    x0: Vec<f64>,
    target: Vec<f64>,
    radius: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let spec = ProbeSpec::new(x0, target, radius, horizon, n_paths, seed);
    let report = py.detach(|| probe(&model.inner, &spec)).map_err(err)?;
    to_py(py, &report)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Principal square root of a symmetric PSD matrix given as nested lists.
#[pyfunction]
#[pyo3(signature = (m, clip_tol=None))]
fn sqrt_psd(m: Vec<Vec<f64>>, clip_tol: Option<f64>) -> PyResult<Vec<Vec<f64>>> {
    let m = matrix(m)?;
    let tol = clip_tol.unwrap_or_else(|| jumperg::matops::default_clip_tol(&m));
    let s = sqrt(&SymmetricMatrix::symmetrize(&m).map_err(err)?, tol).map_err(err)?;
    Ok(rows(s.as_matrix()))
}

#[pyfunction]
fn hs_norm(m: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(hs(&matrix(m)?))
}

/// Seeded batch of commuting-pair norm checks.
#[pyfunction]
#[pyo3(signature = (pairs=10_000, lambdas=None, seed=0))]
fn lemma21_suite(py: Python<'_>, pairs: usize, lambdas: Option<Vec<f64>>, seed: u64) -> PyResult<Py<PyAny>> {
    let mut s = Lemma21Suite { pairs, seed, ..Lemma21Suite::default() };
    if let Some(l) = lambdas {
        s.lambdas = l;
    }
    let report = py.detach(|| suite(&s)).map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
fn rho_delta(x: f64, delta: f64) -> PyResult<f64> {
    rho(x, delta).map_err(err)
}

/// Comparison bound on `E|X_t|^2` from `f' = -lambda3 f^{r/2} + lambda4`.
#[pyfunction]
fn ode_bound(r: f64, lambda3: f64, lambda4: f64, x0sq: f64, t: f64) -> PyResult<f64> {
    drift_ode_bound(r, lambda3, lambda4, x0sq, t).map_err(err)
}

#[pyfunction]
fn ode_closed_form(r: f64, lambda3: f64, x0sq: f64, t: f64) -> PyResult<f64> {
    drift_ode_closed_form(r, lambda3, x0sq, t).map_err(err)
}

/// Validates a TOML experiment config and returns it as a dict.
#[pyfunction]
fn parse_config(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    to_py(py, &parse(text).map_err(err)?)
}

/// Runs a TOML experiment config, writing into `out_dir`; returns the report.
#[pyfunction]
#[pyo3(signature = (text, out_dir, threads=None))]
fn run_experiment(py: Python<'_>, text: &str, out_dir: PathBuf, threads: Option<usize>) -> PyResult<Py<PyAny>> {
    let config = parse(text).map_err(err)?;
    let outcome = py.detach(|| run(&config, &out_dir, threads)).map_err(err)?;
    to_py(py, &outcome.report)
}

#[pymodule]
fn jumperg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Ensemble>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(coupling_tail, m)?)?;
    m.add_function(wrap_pyfunction!(irreducibility_probe, m)?)?;
    m.add_function(wrap_pyfunction!(sqrt_psd, m)?)?;
    m.add_function(wrap_pyfunction!(hs_norm, m)?)?;
    m.add_function(wrap_pyfunction!(lemma21_suite, m)?)?;
    m.add_function(wrap_pyfunction!(rho_delta, m)?)?;
    m.add_function(wrap_pyfunction!(ode_bound, m)?)?;
    m.add_function(wrap_pyfunction!(ode_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(parse_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
