//! Regression form of Average-DICE with linear features `f_θ(s) = φ(s)ᵀθ`.
//!
//! The ratio model regresses `γ^time · ρ_prod` onto the features. The
//! distribution regulariser `(λ2/2)(E[H(1-γ) f_θ] - 1)²` is carried in its
//! conjugate form with a scalar dual variable η, so every update uses one
//! sample at a time:
//!
//! ```text
//! η ← η + α λ2 (H(1-γ) φᵀθ - 1 - η)
//! θ ← θ - α (φ (φᵀθ - y) + λ2 η H(1-γ) φ + λ1 θ)
//! ```
//!
//! Both right-hand sides read the pre-update `(θ, η)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{estimate_j, log_every, regression_target, CurvePoint, RatioEstimate, StepSchedule};
use crate::dataset::{TrajectoryDataset, TransitionRecord};
use crate::error::{DiceError, Result};
use crate::rng::{aux_rng, permutation};

#[derive(Debug, Clone)]
pub struct LinearDiceState {
    theta: Vec<f64>,
    eta: f64,
    rows: Vec<Vec<f64>>,
    pub h: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub schedule: StepSchedule,
    pub step_count: u64,
}

impl LinearDiceState {
    pub fn new(features: &DMatrix<f64>, h: f64, lambda1: f64, lambda2: f64, schedule: StepSchedule) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(DiceError::input(format!("trajectory-length multiplier {h} must be positive")));
        }
        if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
            return Err(DiceError::input("regularisation weights must be nonnegative"));
        }
        schedule.validate()?;
        let rows = features.row_iter().map(|r| r.iter().copied().collect()).collect();
        Ok(LinearDiceState {
            theta: vec![0.0; features.ncols()],
            eta: 0.0,
            rows,
            h,
            lambda1,
            lambda2,
            schedule,
            step_count: 0,
        })
    }

    pub fn theta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `(θ, η)` stacked.
    pub fn params(&self) -> DVector<f64> {
        DVector::from_iterator(self.theta.len() + 1, self.theta.iter().copied().chain([self.eta]))
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Feature bound L: the largest feature-vector norm.
    pub fn feature_bound(&self) -> f64 {
        self.rows.iter().map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max)
    }

    pub fn predict(&self, state: usize) -> f64 {
        dot(&self.rows[state], &self.theta)
    }

    /// `H(1-γ) φ(s)ᵀθ` for every state.
    pub fn ratio(&self, gamma: f64) -> Vec<f64> {
        let scale = self.h * (1.0 - gamma);
        (0..self.rows.len()).map(|s| scale * self.predict(s)).collect()
    }

    /// One update from a logged transition, with the rate taken from the
    /// schedule at the current step count.
    pub fn step(&mut self, record: &TransitionRecord, gamma: f64) -> Result<()> {
        if record.state >= self.rows.len() {
            return Err(DiceError::input(format!("state {} has no feature row", record.state)));
        }
        let y = regression_target(gamma, record.time, record.rho_prod);
        let alpha = self.schedule.rate(self.step_count);
        self.update(record.state, y, alpha, gamma)
    }

    /// One update on `(φ(state), y)` with explicit rate `alpha`.
    pub fn update(&mut self, state: usize, y: f64, alpha: f64, gamma: f64) -> Result<()> {
        let phi = &self.rows[state];
        let pred = dot(phi, &self.theta);
        let coupling = self.h * (1.0 - gamma);
        let eta = self.eta;
        let new_eta = eta + alpha * self.lambda2 * (coupling * pred - 1.0 - eta);
        let feature_coef = (pred - y) + self.lambda2 * eta * coupling;
        for (th, &f) in self.theta.iter_mut().zip(phi) {
            *th -= alpha * (f * feature_coef + self.lambda1 * *th);
        }
        self.eta = new_eta;
        let step = self.step_count;
        self.step_count += 1;
        if !self.eta.is_finite() || self.theta.iter().any(|x| !x.is_finite()) {
            return Err(DiceError::Numerical { step, message: "linear ratio parameters diverged".into() });
        }
        Ok(())
    }
}

/// How the multiplier `H` is set while consuming a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Multiplier {
    /// Keep the `h` the state was built with.
    #[default]
    Fixed,
    /// Experimental: before each step set `H` to transitions seen over
    /// trajectories completed so far (at least one). No convergence guarantee.
    Running,
}

/// Feed `steps` records from `stream` into `state`. Returns the number of
/// records consumed, which is smaller than `steps` if the stream ends.
pub fn run_stream<I: Iterator<Item = TransitionRecord>>(
    state: &mut LinearDiceState,
    stream: I,
    steps: usize,
    gamma: f64,
    multiplier: Multiplier,
) -> Result<usize> {
    let mut seen = 0usize;
    let mut completed = 0usize;
    for record in stream.take(steps) {
        seen += 1;
        if multiplier == Multiplier::Running {
            state.h = seen as f64 / completed.max(1) as f64;
        }
        state.step(&record, gamma)?;
        if record.next_state.is_none() {
            completed += 1;
        }
    }
    Ok(seen)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inner objective of the conjugate form, `η m - η - η²/2`, where `m` is the
/// empirical mean of `H(1-γ) f_θ`.
pub fn conjugate_objective(mass: f64, eta: f64) -> f64 {
    eta * mass - eta - 0.5 * eta * eta
}

/// Closed-form maximiser of [`conjugate_objective`] and the maximum,
/// `(m - 1, (m - 1)²/2)`.
pub fn conjugate_maximum(mass: f64) -> (f64, f64) {
    let eta = mass - 1.0;
    (eta, 0.5 * eta * eta)
}

/// Empirical mean of `H(1-γ) φ(S_t)ᵀθ` over the dataset.
pub fn regulariser_mass(
    dataset: &TrajectoryDataset,
    features: &DMatrix<f64>,
    theta: &DVector<f64>,
    h: f64,
    gamma: f64,
) -> f64 {
    let n = dataset.num_transitions();
    if n == 0 {
        return 0.0;
    }
    let pred = features * theta;
    let total: f64 = dataset.records().iter().map(|r| pred[r.state]).sum();
    h * (1.0 - gamma) * total / n as f64
}

/// Full dataset loss with η at its maximiser:
/// `mean ½(φᵀθ - y)² + (λ1/2)‖θ‖² + (λ2/2)(m - 1)²`.
pub fn dataset_loss(
    dataset: &TrajectoryDataset,
    features: &DMatrix<f64>,
    theta: &DVector<f64>,
    gamma: f64,
    h: f64,
    lambda1: f64,
    lambda2: f64,
) -> f64 {
    let n = dataset.num_transitions();
    if n == 0 {
        return 0.5 * lambda1 * theta.norm_squared() + lambda2 * conjugate_maximum(0.0).1;
    }
    let pred = features * theta;
    let sq: f64 = dataset
        .records()
        .iter()
        .map(|r| {
            let e = pred[r.state] - regression_target(gamma, r.time, r.rho_prod);
            0.5 * e * e
        })
        .sum::<f64>()
        / n as f64;
    let mass = regulariser_mass(dataset, features, theta, h, gamma);
    sq + 0.5 * lambda1 * theta.norm_squared() + lambda2 * conjugate_maximum(mass).1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    /// Multiplier standing in for `n/K` (usually exactly `n/K`).
    pub h: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig { h: 1.0, lambda1: 0.001, lambda2: 0.5, lr: 0.0005, epochs: 2000, batch_size: 512, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct LinearFit {
    pub estimate: RatioEstimate,
    pub theta: DVector<f64>,
    pub eta: f64,
    /// `(step, loss)` at the logging cadence, plus the initial point.
    pub losses: Vec<(u64, f64)>,
    pub curve: Vec<CurvePoint>,
}

/// Mini-batch saddle-point training on a fixed dataset: one descent step on
/// θ and one ascent step on η per batch, simultaneous.
pub fn batch_linear_dice(
    dataset: &TrajectoryDataset,
    features: &DMatrix<f64>,
    gamma: f64,
    cfg: &BatchConfig,
) -> Result<LinearFit> {
    if features.nrows() != dataset.num_states() {
        return Err(DiceError::input(format!(
            "feature matrix has {} rows for {} states",
            features.nrows(),
            dataset.num_states()
        )));
    }
    if cfg.batch_size == 0 {
        return Err(DiceError::input("batch_size must be at least 1"));
    }
    let mut state = LinearDiceState::new(features, cfg.h, cfg.lambda1, cfg.lambda2, StepSchedule::constant(cfg.lr))?;
    let records = dataset.records();
    let n = records.len();
    let d = features.ncols();
    let targets: Vec<f64> = records.iter().map(|r| regression_target(gamma, r.time, r.rho_prod)).collect();
    let coupling = cfg.h * (1.0 - gamma);

    let batches_per_epoch = n.div_ceil(cfg.batch_size) as u64;
    let total = batches_per_epoch * cfg.epochs as u64;
    let every = log_every(total);

    let point = |st: &LinearDiceState, step| CurvePoint::from_ratio(dataset, step, st.ratio(gamma));
    let loss_of =
        |st: &LinearDiceState| dataset_loss(dataset, features, &st.theta(), gamma, cfg.h, cfg.lambda1, cfg.lambda2);
    let mut losses = vec![(0, loss_of(&state))];
    let mut curve = vec![point(&state, 0)?];

    let mut rng = aux_rng(cfg.seed, 4);
    let mut step = 0u64;
    let mut grad = vec![0.0; d];
    for _ in 0..cfg.epochs {
        let order = permutation(&mut rng, n);
        for batch in order.chunks(cfg.batch_size) {
            let inv_b = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut mean_pred = 0.0;
            let mut mean_phi = vec![0.0; d];
            for &p in batch {
                let phi = &state.rows[records[p].state];
                let pred = dot(phi, &state.theta);
                let err = pred - targets[p];
                for j in 0..d {
                    grad[j] += err * phi[j];
                    mean_phi[j] += phi[j];
                }
                mean_pred += pred;
            }
            mean_pred *= inv_b;
            let eta = state.eta;
            for j in 0..d {
                let g =
                    grad[j] * inv_b + cfg.lambda1 * state.theta[j] + cfg.lambda2 * eta * coupling * mean_phi[j] * inv_b;
                state.theta[j] -= cfg.lr * g;
            }
            state.eta = eta + cfg.lr * cfg.lambda2 * (coupling * mean_pred - 1.0 - eta);
            state.step_count += 1;
            step += 1;
            if !state.eta.is_finite() || state.theta.iter().any(|x| !x.is_finite()) {
                return Err(DiceError::Numerical { step, message: "batch Average-DICE diverged".into() });
            }
            if step.is_multiple_of(every) || step == total {
                let loss = loss_of(&state);
                if !loss.is_finite() {
                    return Err(DiceError::Numerical { step, message: "loss is not finite".into() });
                }
                losses.push((step, loss));
                curve.push(point(&state, step)?);
            }
        }
    }

    let ratio = state.ratio(gamma);
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("h".to_string(), cfg.h);
    diagnostics.insert("steps".to_string(), step as f64);
    diagnostics.insert("mass".to_string(), super::empirical_mass(dataset, &ratio));
    diagnostics.insert("eta".to_string(), state.eta);
    diagnostics.insert("feature_bound".to_string(), state.feature_bound());
    diagnostics.insert("final_loss".to_string(), losses.last().map_or(f64::NAN, |l| l.1));
    let j_hat = estimate_j(dataset, &ratio)?;
    Ok(LinearFit {
        estimate: RatioEstimate { ratio, j_hat, diagnostics },
        theta: state.theta(),
        eta: state.eta,
        losses,
        curve,
    })
}
