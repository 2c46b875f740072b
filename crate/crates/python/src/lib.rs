//! Python bindings. Matrices cross the boundary as nested lists (row-major);
//! a dataset is a list of count matrices.

use ndarray::Array2;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nmf_rlct::cli::select_from_data;
use nmf_rlct::estimators::waic_parts;
use nmf_rlct::gibbs::run_chain;
use nmf_rlct::harness::run_experiment;
use nmf_rlct::model::generate_dataset;
use nmf_rlct::vb::fit;
use nmf_rlct::{
    CoefficientReport, CountDataset, Error, FactorPair, GibbsConfig, Hyperparameters, ModelDims, PosteriorDraws,
    RunConfig, VBConfig,
};

create_exception!(nmf_rlct_py, NumericalError, PyRuntimeError);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Numeric(_) | Error::Estimator(_) => NumericalError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix<T: Clone>(rows: Vec<Vec<T>>) -> PyResult<Array2<T>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("expected a non-empty rectangular matrix"));
    }
    Ok(Array2::from_shape_vec((r, c), rows.concat()).expect("shape checked"))
}

fn rows<T: Clone>(m: &Array2<T>) -> Vec<Vec<T>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn dataset(data: Vec<Vec<Vec<u64>>>) -> PyResult<CountDataset> {
    let obs = data.into_iter().map(matrix).collect::<PyResult<Vec<_>>>()?;
    CountDataset::new(obs).map_err(py_err)
}

fn pair(u: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> PyResult<FactorPair> {
    FactorPair::new(matrix(u)?, matrix(v)?).map_err(py_err)
}

/// Model dimensions: M×N observations, inner dimension H, true rank H0.
#[pyclass(name = "ModelDims", frozen)]
#[derive(Clone, Copy)]
struct PyModelDims(ModelDims);

#[pymethods]
impl PyModelDims {
    #[new]
    #[pyo3(signature = (m, n, h, h0))]
    fn new(m: usize, n: usize, h: usize, h0: usize) -> PyResult<Self> {
        ModelDims::new(m, n, h, h0).map(Self).map_err(py_err)
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }

    #[getter]
    fn h(&self) -> usize {
        self.0.h
    }

    #[getter]
    fn h0(&self) -> usize {
        self.0.h0
    }

    fn __repr__(&self) -> String {
        format!("ModelDims(m={}, n={}, h={}, h0={})", self.0.m, self.0.n, self.0.h, self.0.h0)
    }
}

/// Gamma prior shapes and rates.
#[pyclass(name = "Prior", frozen)]
#[derive(Clone, Copy)]
struct PyPrior(Hyperparameters);

#[pymethods]
impl PyPrior {
    #[new]
    #[pyo3(signature = (phi_u, phi_v=None, theta_u=1.0, theta_v=1.0))]
    fn new(phi_u: f64, phi_v: Option<f64>, theta_u: f64, theta_v: f64) -> PyResult<Self> {
        Hyperparameters::new(phi_u, theta_u, phi_v.unwrap_or(phi_u), theta_v).map(Self).map_err(py_err)
    }

    #[getter]
    fn phi_u(&self) -> f64 {
        self.0.phi_u
    }

    #[getter]
    fn phi_v(&self) -> f64 {
        self.0.phi_v
    }

    #[getter]
    fn theta_u(&self) -> f64 {
        self.0.theta_u
    }

    #[getter]
    fn theta_v(&self) -> f64 {
        self.0.theta_v
    }

    fn __repr__(&self) -> String {
        let h = &self.0;
        format!("Prior(phi_u={}, phi_v={}, theta_u={}, theta_v={})", h.phi_u, h.phi_v, h.theta_u, h.theta_v)
    }
}

/// Exact learning coefficients as a dict of `(fraction string, float)` pairs.
#[pyfunction]
fn coefficients<'py>(py: Python<'py>, dims: &PyModelDims, prior: &PyPrior) -> PyResult<Bound<'py, PyDict>> {
    let r = CoefficientReport::compute(&dims.0, &prior.0).map_err(py_err)?;
    let out = PyDict::new_bound(py);
    let exact = |x: nmf_rlct::coefficients::Exact| (x.to_string(), nmf_rlct::coefficients::to_f64(x.0));
    out.set_item("lambda_vb", exact(r.lambda_vb))?;
    out.set_item("lambda_upper", exact(r.lambda_upper))?;
    out.set_item("lambda_gap_lower", r.lambda_gap_lower.map(exact))?;
    out.set_item("lambda_exact", r.lambda_exact.map(exact))?;
    out.set_item("regular_half_d", exact(r.regular_half_d))?;
    Ok(out)
}

/// Draws `n` observations from Poisson(U V).
#[pyfunction]
fn generate(u: Vec<Vec<f64>>, v: Vec<Vec<f64>>, n: usize, seed: u64) -> PyResult<Vec<Vec<Vec<u64>>>> {
    let truth = pair(u, v)?;
    let data = generate_dataset(&truth, n, seed).map_err(py_err)?;
    Ok(data.observations().iter().map(rows).collect())
}

/// Retained Gibbs states as a list of `(U, V)`.
#[pyfunction]
#[pyo3(signature = (data, dims, prior, burn_in=20_000, thin=20, draws=1000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn gibbs(
    py: Python<'_>,
    data: Vec<Vec<Vec<u64>>>,
    dims: &PyModelDims,
    prior: &PyPrior,
    burn_in: usize,
    thin: usize,
    draws: usize,
    seed: u64,
) -> PyResult<Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>> {
    let data = dataset(data)?;
    let cfg = GibbsConfig { burn_in, thin, draws, seed };
    let (d, p) = (dims.0, prior.0);
    let out = py.allow_threads(|| run_chain(&data, &p, &d, &cfg)).map_err(py_err)?;
    Ok(out.draws.iter().map(|s| (rows(&s.u), rows(&s.v))).collect())
}

/// Mean-field fit; returns free energy, trajectory and posterior means.
#[pyfunction]
#[pyo3(signature = (data, dims, prior, max_iters=10_000, tol=1e-8, restarts=5, seed=0))]
#[allow(clippy::too_many_arguments)]
fn vb<'py>(
    py: Python<'py>,
    data: Vec<Vec<Vec<u64>>>,
    dims: &PyModelDims,
    prior: &PyPrior,
    max_iters: usize,
    tol: f64,
    restarts: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let data = dataset(data)?;
    let cfg = VBConfig { max_iters, tol, restarts, seed };
    let (d, p) = (dims.0, prior.0);
    let f = py.allow_threads(|| fit(&data, &p, &d, &cfg)).map_err(py_err)?;
    let out = PyDict::new_bound(py);
    out.set_item("free_energy", f.free_energy)?;
    out.set_item("trajectory", f.trajectory.clone())?;
    out.set_item("converged", f.converged)?;
    out.set_item("mean_u", rows(&f.posterior.mean_u()))?;
    out.set_item("mean_v", rows(&f.posterior.mean_v()))?;
    Ok(out)
}

/// `(T_n, V_n, W_n)` for a dataset and a list of `(U, V)` draws.
#[pyfunction]
fn waic(
    data: Vec<Vec<Vec<u64>>>,
    draws: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
) -> PyResult<(f64, f64, f64)> {
    let data = dataset(data)?;
    let draws = draws.into_iter().map(|(u, v)| pair(u, v)).collect::<PyResult<Vec<_>>>()?;
    let first = draws.first().ok_or_else(|| PyValueError::new_err("no draws"))?;
    let (m, n) = data.shape();
    let dims = ModelDims::new(m, n, first.inner(), 0).map_err(py_err)?;
    let draws = PosteriorDraws::new(draws, dims).map_err(py_err)?;
    let p = waic_parts(&data, &draws).map_err(py_err)?;
    Ok((p.empirical_loss, p.functional_variance, p.waic))
}

fn run_config(preset: Option<&str>, config: Option<&str>) -> PyResult<RunConfig> {
    let cfg = match (preset, config) {
        (Some(_), Some(_)) => return Err(PyValueError::new_err("give either preset or config, not both")),
        (Some(name), None) => RunConfig::preset(name),
        (None, Some(text)) => RunConfig::from_toml_str(text, std::path::Path::new("<config>")),
        (None, None) => Ok(RunConfig::default()),
    }
    .map_err(py_err)?
    .resolved();
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// Replicated RLCT estimate from a preset name or TOML text.
#[pyfunction]
#[pyo3(signature = (preset=None, config=None, replicates=None))]
fn experiment<'py>(
    py: Python<'py>,
    preset: Option<&str>,
    config: Option<&str>,
    replicates: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = run_config(preset, config)?;
    if let Some(d) = replicates {
        cfg.experiment.replicates = d;
    }
    let e = cfg.experiment().map_err(py_err)?;
    let r = py.allow_threads(|| run_experiment(&e)).map_err(py_err)?;
    let out = PyDict::new_bound(py);
    out.set_item("lambda_hat", r.lambda_hat)?;
    out.set_item("stderr", r.stderr)?;
    out.set_item("lambda_vb", r.lambda_vb)?;
    out.set_item("lambda_upper", r.lambda_upper)?;
    out.set_item("lambda_points", r.replicates.iter().map(|x| x.estimates.lambda_point).collect::<Vec<_>>())?;
    out.set_item("failed", r.failed.len())?;
    Ok(out)
}

/// Rank chosen by penalized variational free energy, plus per-rank scores.
#[pyfunction]
#[pyo3(signature = (data, config=None))]
fn select_rank(data: Vec<Vec<Vec<u64>>>, config: Option<&str>) -> PyResult<(usize, Vec<(usize, Option<f64>)>)> {
    let cfg = run_config(None, config)?;
    cfg.validate_ranks().map_err(py_err)?;
    let s = select_from_data(&dataset(data)?, &cfg).map_err(py_err)?;
    Ok((s.selected, s.candidates.iter().map(|c| (c.rank, c.score)).collect()))
}

#[pymodule]
fn nmf_rlct_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelDims>()?;
    m.add_class::<PyPrior>()?;
    m.add("NumericalError", m.py().get_type_bound::<NumericalError>())?;
    m.add_function(wrap_pyfunction!(coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(gibbs, m)?)?;
    m.add_function(wrap_pyfunction!(vb, m)?)?;
    m.add_function(wrap_pyfunction!(waic, m)?)?;
    m.add_function(wrap_pyfunction!(experiment, m)?)?;
    m.add_function(wrap_pyfunction!(select_rank, m)?)?;
    Ok(())
}
