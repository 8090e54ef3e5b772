//! Python bindings for dicelab.
//!
//! Matrices cross the boundary as nested lists and structured results as
//! dicts. Estimator specs use the same JSON form as sweep configs.

use dicelab::dataset::{self, GenerateOptions, TrajectoryDataset, TruncationPolicy};
use dicelab::envs::{self, BuiltinEnv};
use dicelab::estimators::{batch_linear_dice, features, tabular_average_dice, BatchConfig};
use dicelab::harness::{self, EstimatorSpec, EvalContext};
use dicelab::mdp::Policy;
use dicelab::oracle::{self, OracleReport};
use dicelab::DiceError;
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(err: DiceError) -> PyErr {
    match err {
        DiceError::InvalidInput(_) | DiceError::Parse { .. } => PyValueError::new_err(err.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn parse_truncation(name: &str) -> PyResult<TruncationPolicy> {
    match name {
        "include" => Ok(TruncationPolicy::Include),
        "exclude" => Ok(TruncationPolicy::Exclude),
        "error" => Ok(TruncationPolicy::Error),
        other => Err(PyValueError::new_err(format!("unknown truncation policy '{other}'"))),
    }
}

/// A built-in environment with its target policy.
#[pyclass(name = "Env", frozen)]
struct PyEnv {
    inner: BuiltinEnv,
}

#[pymethods]
impl PyEnv {
    #[new]
    #[pyo3(signature = (spec, gamma = envs::DEFAULT_GAMMA))]
    fn new(spec: &str, gamma: f64) -> PyResult<Self> {
        Ok(PyEnv { inner: envs::parse_env(spec, gamma).map_err(to_py)? })
    }

    #[getter]
    fn spec(&self) -> &str {
        &self.inner.spec
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.mdp.num_states()
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.inner.mdp.num_actions()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.mdp.discount()
    }

    fn initial_dist(&self) -> Vec<f64> {
        self.inner.mdp.initial_dist().to_vec()
    }

    fn target(&self) -> Vec<Vec<f64>> {
        self.inner.target.probs().to_vec()
    }

    #[pyo3(signature = (eps = 0.3, var_scale = 1.0))]
    fn behaviour(&self, eps: f64, var_scale: f64) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.inner.behaviour(eps, var_scale).map_err(to_py)?.probs().to_vec())
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.mdp.to_json().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Env('{}', gamma={})", self.inner.spec, self.inner.mdp.discount())
    }
}

/// Off-policy trajectory dataset.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: TrajectoryDataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyDataset { inner: TrajectoryDataset::load(path).map_err(to_py)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.num_transitions()
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn num_trajectories(&self) -> usize {
        self.inner.num_trajectories()
    }

    #[getter]
    fn completed_trajectories(&self) -> usize {
        self.inner.completed_trajectories()
    }

    fn state_frequencies(&self) -> Vec<f64> {
        self.inner.state_frequencies()
    }

    /// Records as `(state, action, reward, next_state, time, rho_step,
    /// rho_prod, traj_id)` tuples; `next_state` is None at termination.
    #[allow(clippy::type_complexity)]
    fn records(&self) -> Vec<(usize, usize, f64, Option<usize>, u64, f64, f64, u64)> {
        self.inner
            .records()
            .iter()
            .map(|r| (r.state, r.action, r.reward, r.next_state, r.time, r.rho_step, r.rho_prod, r.traj_id))
            .collect()
    }
}

#[pyfunction]
#[pyo3(signature = (env, num_trajectories, seed = 0, behaviour_eps = 0.3, var_scale = 1.0, max_len = 100, truncation = "include"))]
fn generate(
    env: &PyEnv,
    num_trajectories: usize,
    seed: u64,
    behaviour_eps: f64,
    var_scale: f64,
    max_len: usize,
    truncation: &str,
) -> PyResult<PyDataset> {
    let env = &env.inner;
    let mu = env.behaviour(behaviour_eps, var_scale).map_err(to_py)?;
    let opts = GenerateOptions { num_trajectories, max_len, seed, truncation: parse_truncation(truncation)? };
    let mut ds = dataset::generate(&env.mdp, &mu, &env.target, &opts).map_err(to_py)?;
    ds.header.env = Some(env.spec.clone());
    ds.header.behaviour_eps = Some(behaviour_eps);
    ds.header.var_scale = Some(var_scale);
    Ok(PyDataset { inner: ds })
}

fn report_dict<'py>(py: Python<'py>, r: &OracleReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("d_pi_gamma", &r.d_pi_gamma)?;
    d.set_item("d_mu", &r.d_mu)?;
    d.set_item("density_ratio", &r.density_ratio)?;
    d.set_item("j_pi", r.j_pi)?;
    d.set_item("expected_len_mu", r.expected_len_mu)?;
    d.set_item("gamma_mass_pi", r.gamma_mass_pi)?;
    d.set_item("q_pi", &r.q_pi)?;
    Ok(d)
}

/// Exact ground truth for the env's target under its behaviour policy.
#[pyfunction]
#[pyo3(signature = (env, behaviour_eps = 0.3, var_scale = 1.0))]
fn oracle_report<'py>(
    py: Python<'py>,
    env: &PyEnv,
    behaviour_eps: f64,
    var_scale: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let env = &env.inner;
    let mu = env.behaviour(behaviour_eps, var_scale).map_err(to_py)?;
    let report = OracleReport::compute(&env.mdp, &env.target, &mu).map_err(to_py)?;
    report_dict(py, &report)
}

/// Tabular Average-DICE: `(j_hat, ratio)`.
#[pyfunction]
fn tabular_dice(dataset: &PyDataset, gamma: f64) -> PyResult<(f64, Vec<f64>)> {
    let ds = &dataset.inner;
    let est = tabular_average_dice(ds, gamma).and_then(|c| c.to_estimate(ds)).map_err(to_py)?;
    Ok((est.j_hat, est.ratio))
}

/// Mini-batch linear Average-DICE. `h` defaults to `n/K`.
#[pyfunction]
#[pyo3(signature = (
    dataset, gamma, features = "onehot", feature_seed = 0, lambda1 = 0.001, lambda2 = 0.5,
    lr = 0.0005, epochs = 2000, batch_size = 512, h = None, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn linear_dice<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    gamma: f64,
    features: &str,
    feature_seed: u64,
    lambda1: f64,
    lambda2: f64,
    lr: f64,
    epochs: usize,
    batch_size: usize,
    h: Option<f64>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let ds = &dataset.inner;
    let phi = features::from_spec(features, ds.num_states(), feature_seed).map_err(to_py)?;
    let h = match h {
        Some(h) => h,
        None => ds.n_over_k().map_err(to_py)?,
    };
    let cfg = BatchConfig { h, lambda1, lambda2, lr, epochs, batch_size, seed };
    let fit = py.detach(|| batch_linear_dice(ds, &phi, gamma, &cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("j_hat", fit.estimate.j_hat)?;
    d.set_item("ratio", &fit.estimate.ratio)?;
    d.set_item("theta", fit.theta.as_slice())?;
    d.set_item("eta", fit.eta)?;
    d.set_item("losses", &fit.losses)?;
    Ok(d)
}

/// Run any estimator described by a JSON spec, e.g. `{"kind": "td", "lr":
/// 0.05, "decay_power": null, "epochs": 100}`. Returns the final `j_hat`,
/// the ratio (empty for TD) and the curve as `(step, j_hat)` pairs.
#[pyfunction]
#[pyo3(signature = (dataset, env, spec, seed = 0, behaviour_eps = 0.3, var_scale = 1.0))]
fn run_estimator<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    env: &PyEnv,
    spec: &str,
    seed: u64,
    behaviour_eps: f64,
    var_scale: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec: EstimatorSpec = serde_json::from_str(spec).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let env = &env.inner;
    let mu = env.behaviour(behaviour_eps, var_scale).map_err(to_py)?;
    let report = OracleReport::compute(&env.mdp, &env.target, &mu).ok();
    let ctx = EvalContext {
        initial_dist: Some(env.mdp.initial_dist()),
        target: Some(&env.target),
        gamma: env.mdp.discount(),
        oracle: report.as_ref(),
        seed,
    };
    let trace = py.detach(|| harness::run_estimator(&spec, &dataset.inner, &ctx)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("j_hat", trace.estimate.j_hat)?;
    d.set_item("ratio", &trace.estimate.ratio)?;
    let curve: Vec<(u64, f64)> = trace.curve.iter().map(|p| (p.step, p.j_hat)).collect();
    d.set_item("curve", curve)?;
    Ok(d)
}

/// Closed-form fixed point of the linear update and its stability.
#[pyfunction]
#[pyo3(signature = (features, d_mu, density_ratio, expected_len_mu, gamma, lambda1, lambda2, h = None))]
#[allow(clippy::too_many_arguments)]
fn fixed_point<'py>(
    py: Python<'py>,
    features: Vec<Vec<f64>>,
    d_mu: Vec<f64>,
    density_ratio: Vec<f64>,
    expected_len_mu: f64,
    gamma: f64,
    lambda1: f64,
    lambda2: f64,
    h: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let phi = matrix(&features)?;
    let h = h.unwrap_or(expected_len_mu);
    let sys = oracle::assemble_fixed_point(&phi, &d_mu, &density_ratio, expected_len_mu, gamma, lambda1, lambda2, h)
        .map_err(to_py)?;
    let stability = oracle::check_hurwitz(&sys.g_matrix).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("theta", sys.theta().as_slice())?;
    d.set_item("eta", sys.eta())?;
    d.set_item("stable", stability.stable)?;
    d.set_item("max_real_part", stability.max_real_part)?;
    Ok(d)
}

/// Exact discounted target distribution for explicit policy probabilities.
#[pyfunction]
fn discounted_stationary(env: &PyEnv, policy: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let pol = Policy::new(policy).map_err(to_py)?;
    oracle::discounted_stationary(&env.inner.mdp, &pol).map_err(to_py)
}

#[pymodule]
fn pydicelab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnv>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_report, m)?)?;
    m.add_function(wrap_pyfunction!(tabular_dice, m)?)?;
    m.add_function(wrap_pyfunction!(linear_dice, m)?)?;
    m.add_function(wrap_pyfunction!(run_estimator, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_point, m)?)?;
    m.add_function(wrap_pyfunction!(discounted_stationary, m)?)?;
    Ok(())
}
