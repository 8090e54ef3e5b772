//! Density-ratio estimators and off-policy return estimates.
//!
//! Average-DICE comes in two forms: the exact counting estimator
//! ([`tabular`]) and the regression form with linear features ([`linear`]),
//! trained either incrementally on a restart stream or by mini-batch
//! descent on a fixed dataset. [`td`], [`cop_td`] and [`baseline`] are the
//! comparison points.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::TrajectoryDataset;
use crate::error::{DiceError, Result};

pub mod baseline;
pub mod cop_td;
pub mod features;
pub mod linear;
pub mod tabular;
pub mod td;

pub use baseline::average_reward_baseline;
pub use cop_td::{cop_td, CopTdConfig, CopTdFit, InitialCorrection};
pub use linear::{batch_linear_dice, run_stream, BatchConfig, LinearDiceState, LinearFit, Multiplier};
pub use tabular::{tabular_average_dice, TabularCorrection};
pub use td::{off_policy_td, TdConfig, TdResult};

/// Ratio table plus the return estimate it implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub ratio: Vec<f64>,
    pub j_hat: f64,
    pub diagnostics: BTreeMap<String, f64>,
}

/// A logged training point. `ratio` is empty and `mass` NaN for estimators
/// without a state correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub j_hat: f64,
    pub mass: f64,
    pub ratio: Vec<f64>,
}

impl CurvePoint {
    pub fn from_ratio(dataset: &TrajectoryDataset, step: u64, ratio: Vec<f64>) -> Result<Self> {
        Ok(CurvePoint { step, j_hat: estimate_j(dataset, &ratio)?, mass: empirical_mass(dataset, &ratio), ratio })
    }

    pub fn value_only(step: u64, j_hat: f64) -> Self {
        CurvePoint { step, j_hat, mass: f64::NAN, ratio: Vec::new() }
    }
}

/// Learning-rate schedules. `Decaying` is `scale / (1 + t)^power` with
/// `power` in (0.5, 1], which keeps Σα = ∞ and Σα² < ∞.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StepSchedule {
    Constant { rate: f64 },
    Decaying { scale: f64, power: f64 },
}

impl StepSchedule {
    pub fn constant(rate: f64) -> Self {
        StepSchedule::Constant { rate }
    }

    pub fn decaying(scale: f64, power: f64) -> Self {
        StepSchedule::Decaying { scale, power }
    }

    pub fn rate(&self, t: u64) -> f64 {
        match *self {
            StepSchedule::Constant { rate } => rate,
            StepSchedule::Decaying { scale, power } => scale / (1.0 + t as f64).powf(power),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Constant { rate } if rate.is_finite() && rate >= 0.0 => Ok(()),
            StepSchedule::Decaying { scale, power }
                if scale.is_finite() && scale >= 0.0 && power > 0.5 && power <= 1.0 =>
            {
                Ok(())
            }
            other => Err(DiceError::input(format!("invalid step schedule {other:?}"))),
        }
    }
}

impl Default for StepSchedule {
    /// `0.1 / (1 + t)^0.75`
    fn default() -> Self {
        StepSchedule::decaying(0.1, 0.75)
    }
}

/// Curves keep at most ~200 points regardless of run length.
pub fn log_every(total_steps: u64) -> u64 {
    (total_steps / 200).max(1)
}

/// `γ^time`. Beyond 500 steps the power is taken through the logarithm.
pub fn discount_pow(gamma: f64, time: u64) -> f64 {
    if time > 500 {
        (time as f64 * gamma.ln()).exp()
    } else {
        gamma.powi(time as i32)
    }
}

/// Regression target `γ^time · ρ_{0:time-1}`.
pub fn regression_target(gamma: f64, time: u64, rho_prod: f64) -> f64 {
    if time > 500 {
        if rho_prod == 0.0 {
            return 0.0;
        }
        (time as f64 * gamma.ln() + rho_prod.ln()).exp()
    } else {
        gamma.powi(time as i32) * rho_prod
    }
}

/// `(1/n) Σ_t ratio[S_t] R_t`. Any `(n/K)(1-γ)` scaling must already be
/// inside `ratio`.
pub fn estimate_j(dataset: &TrajectoryDataset, ratio: &[f64]) -> Result<f64> {
    if ratio.len() < dataset.num_states() {
        return Err(DiceError::input(format!("ratio has {} entries for {} states", ratio.len(), dataset.num_states())));
    }
    let n = dataset.num_transitions();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = dataset.records().iter().map(|r| ratio[r.state] * r.reward).sum();
    Ok(total / n as f64)
}

/// `Σ_s d̂(s) ratio(s)`: the empirical mass of the corrected distribution.
pub fn empirical_mass(dataset: &TrajectoryDataset, ratio: &[f64]) -> f64 {
    dataset.state_frequencies().iter().zip(ratio).map(|(d, r)| d * r).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, GenerateOptions};
    use crate::envs;

    #[test]
    fn schedules() {
        assert_eq!(StepSchedule::constant(0.5).rate(100), 0.5);
        let d = StepSchedule::default();
        assert!((d.rate(0) - 0.1).abs() < 1e-15);
        assert!((d.rate(15) - 0.1 / 8.0).abs() < 1e-15);
        assert!(StepSchedule::decaying(0.1, 0.5).validate().is_err());
        assert!(StepSchedule::decaying(0.1, 1.0).validate().is_ok());
        assert!(StepSchedule::constant(-1.0).validate().is_err());
    }

    #[test]
    fn discount_paths_agree_near_the_switch() {
        let g: f64 = 0.99;
        let direct = g.powi(501);
        assert!((discount_pow(g, 501) - direct).abs() < 1e-12 * direct);
        assert!((regression_target(g, 600, 2.0) - 2.0 * g.powi(600)).abs() < 1e-12);
        assert_eq!(regression_target(g, 600, 0.0), 0.0);
    }

    #[test]
    fn estimate_j_special_cases() {
        let env = envs::parse_env("chain:5", 0.9).unwrap();
        let mu = env.behaviour(0.3, 1.0).unwrap();
        let ds = generate(&env.mdp, &mu, &env.target, &GenerateOptions { num_trajectories: 30, ..Default::default() })
            .unwrap();
        let ones = vec![1.0; 5];
        let naive = average_reward_baseline(&ds).unwrap();
        assert!((estimate_j(&ds, &ones).unwrap() - naive).abs() < 1e-15);
        assert!(estimate_j(&ds, &[1.0; 2]).is_err());

        let zero_mdp =
            crate::mdp::TabularMdp::new(1, 1, vec![vec![vec![0.5]]], vec![vec![0.5]], vec![vec![0.0]], vec![1.0], 0.9)
                .unwrap();
        let p = crate::mdp::Policy::uniform(1, 1);
        let ds0 = generate(&zero_mdp, &p, &p, &GenerateOptions { num_trajectories: 5, ..Default::default() }).unwrap();
        assert_eq!(estimate_j(&ds0, &[3.0]).unwrap(), 0.0);
    }

    #[test]
    fn curve_cadence() {
        assert_eq!(log_every(0), 1);
        assert_eq!(log_every(150), 1);
        assert_eq!(log_every(10_000), 50);
    }
}
