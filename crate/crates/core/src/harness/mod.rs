//! Experiment sweeps: config expansion, seeded runs against exact oracles,
//! aggregation over seeds, hyperparameter selection and plot data.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::TrajectoryDataset;
use crate::error::{DiceError, Result};
use crate::estimators::{
    average_reward_baseline, batch_linear_dice, cop_td, features, off_policy_td, tabular_average_dice, BatchConfig,
    CopTdConfig, CurvePoint, InitialCorrection, RatioEstimate, StepSchedule, TdConfig,
};
use crate::mdp::Policy;
use crate::oracle::OracleReport;

pub mod config;
pub mod plotdata;
pub mod select;
pub mod sweep;

pub use config::{EstimatorGrid, ExperimentConfig};
pub use plotdata::{emit_plot_data, PlotRow};
pub use select::{read_aggregate, select_best, SelectedPoint};
pub use sweep::{execute_sweep, read_results, run_sweep, AggregateRow, RunResult, SweepOutput};

/// The multiplier `H` used by linear Average-DICE.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum HSpec {
    /// `n/K` of the dataset.
    #[default]
    Empirical,
    /// `E_μ[T]` from the oracle.
    Oracle,
    Fixed(f64),
}

impl HSpec {
    pub fn resolve(&self, dataset: &TrajectoryDataset, oracle: Option<&OracleReport>) -> Result<f64> {
        match *self {
            HSpec::Empirical => dataset.n_over_k(),
            HSpec::Oracle => {
                oracle.map(|o| o.expected_len_mu).ok_or_else(|| DiceError::input("h=oracle needs an oracle report"))
            }
            HSpec::Fixed(h) => Ok(h),
        }
    }
}

impl FromStr for HSpec {
    type Err = DiceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(HSpec::Empirical),
            "oracle" => Ok(HSpec::Oracle),
            other => {
                other.parse::<f64>().ok().filter(|h| *h > 0.0 && h.is_finite()).map(HSpec::Fixed).ok_or_else(|| {
                    DiceError::input(format!("h must be empirical, oracle or a positive number, got '{other}'"))
                })
            }
        }
    }
}

impl fmt::Display for HSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HSpec::Empirical => f.write_str("empirical"),
            HSpec::Oracle => f.write_str("oracle"),
            HSpec::Fixed(h) => write!(f, "{h}"),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawH {
    Number(f64),
    Name(String),
}

impl Serialize for HSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            HSpec::Fixed(h) => s.serialize_f64(*h),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for HSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match RawH::deserialize(d)? {
            RawH::Number(h) => HSpec::Fixed(h).to_string().parse().map_err(serde::de::Error::custom),
            RawH::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// One fully specified estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimatorSpec {
    AvgDice,
    AvgDiceLinear {
        features: String,
        feature_seed: u64,
        lambda1: f64,
        lambda2: f64,
        lr: f64,
        epochs: usize,
        batch_size: usize,
        h: HSpec,
    },
    Td {
        lr: f64,
        decay_power: Option<f64>,
        epochs: usize,
    },
    CopTd {
        lr: f64,
        decay_power: Option<f64>,
        epochs: usize,
        correction: InitialCorrection,
    },
    AvgReward,
}

impl EstimatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorSpec::AvgDice => "avg-dice",
            EstimatorSpec::AvgDiceLinear { .. } => "avg-dice-linear",
            EstimatorSpec::Td { .. } => "td",
            EstimatorSpec::CopTd { .. } => "cop-td",
            EstimatorSpec::AvgReward => "avg-reward",
        }
    }

    pub fn lr(&self) -> Option<f64> {
        match *self {
            EstimatorSpec::AvgDiceLinear { lr, .. }
            | EstimatorSpec::Td { lr, .. }
            | EstimatorSpec::CopTd { lr, .. } => Some(lr),
            _ => None,
        }
    }

    pub fn lambdas(&self) -> (Option<f64>, Option<f64>) {
        match *self {
            EstimatorSpec::AvgDiceLinear { lambda1, lambda2, .. } => (Some(lambda1), Some(lambda2)),
            _ => (None, None),
        }
    }

    /// Compact human-readable label, unique within a sweep.
    pub fn label(&self) -> String {
        match self {
            EstimatorSpec::AvgDiceLinear { features, lambda1, lambda2, lr, epochs, batch_size, h, .. } => {
                format!(
                    "avg-dice-linear[{features},l1={lambda1},l2={lambda2},lr={lr},ep={epochs},bs={batch_size},h={h}]"
                )
            }
            EstimatorSpec::Td { lr, decay_power, epochs } => match decay_power {
                Some(p) => format!("td[lr={lr}/(1+t)^{p},ep={epochs}]"),
                None => format!("td[lr={lr},ep={epochs}]"),
            },
            EstimatorSpec::CopTd { lr, decay_power, epochs, correction } => {
                let c = match correction {
                    InitialCorrection::DistributionRatio => "ratio",
                    InitialCorrection::StartIndicator => "start",
                };
                match decay_power {
                    Some(p) => format!("cop-td[lr={lr}/(1+t)^{p},ep={epochs},{c}]"),
                    None => format!("cop-td[lr={lr},ep={epochs},{c}]"),
                }
            }
            other => other.name().to_string(),
        }
    }
}

fn schedule(lr: f64, decay_power: Option<f64>) -> StepSchedule {
    match decay_power {
        Some(p) => StepSchedule::decaying(lr, p),
        None => StepSchedule::constant(lr),
    }
}

/// The run's training curve and final estimate.
#[derive(Debug, Clone)]
pub struct Trace {
    pub curve: Vec<CurvePoint>,
    pub estimate: RatioEstimate,
}

/// What an estimator may need besides the dataset.
pub struct EvalContext<'a> {
    /// Required by TD and COP-TD.
    pub initial_dist: Option<&'a [f64]>,
    /// Required by TD.
    pub target: Option<&'a Policy>,
    pub gamma: f64,
    pub oracle: Option<&'a OracleReport>,
    pub seed: u64,
}

pub fn run_estimator(spec: &EstimatorSpec, dataset: &TrajectoryDataset, ctx: &EvalContext<'_>) -> Result<Trace> {
    let gamma = ctx.gamma;
    match spec {
        EstimatorSpec::AvgDice => {
            let est = tabular_average_dice(dataset, gamma)?.to_estimate(dataset)?;
            let point = CurvePoint::from_ratio(dataset, 0, est.ratio.clone())?;
            Ok(Trace { curve: vec![point], estimate: est })
        }
        EstimatorSpec::AvgDiceLinear { features: fspec, feature_seed, lambda1, lambda2, lr, epochs, batch_size, h } => {
            let phi = features::from_spec(fspec, dataset.num_states(), *feature_seed)?;
            let cfg = BatchConfig {
                h: h.resolve(dataset, ctx.oracle)?,
                lambda1: *lambda1,
                lambda2: *lambda2,
                lr: *lr,
                epochs: *epochs,
                batch_size: *batch_size,
                seed: ctx.seed,
            };
            let fit = batch_linear_dice(dataset, &phi, gamma, &cfg)?;
            Ok(Trace { curve: fit.curve, estimate: fit.estimate })
        }
        EstimatorSpec::Td { lr, decay_power, epochs } => {
            let cfg = TdConfig { schedule: schedule(*lr, *decay_power), epochs: *epochs, seed: ctx.seed };
            let (nu, target) = ctx
                .initial_dist
                .zip(ctx.target)
                .ok_or_else(|| DiceError::input("TD needs the initial distribution and target policy"))?;
            let res = off_policy_td(dataset, nu, target, gamma, &cfg)?;
            Ok(Trace { curve: res.curve, estimate: res.estimate })
        }
        EstimatorSpec::CopTd { lr, decay_power, epochs, correction } => {
            let cfg = CopTdConfig {
                schedule: schedule(*lr, *decay_power),
                epochs: *epochs,
                seed: ctx.seed,
                correction: *correction,
            };
            let nu = ctx.initial_dist.ok_or_else(|| DiceError::input("COP-TD needs the initial distribution"))?;
            let fit = cop_td(dataset, nu, gamma, &cfg)?;
            Ok(Trace { curve: fit.curve, estimate: fit.estimate })
        }
        EstimatorSpec::AvgReward => {
            let j = average_reward_baseline(dataset)?;
            let ones = vec![1.0; dataset.num_states()];
            let point = CurvePoint::from_ratio(dataset, 0, ones.clone())?;
            let mut diagnostics = std::collections::BTreeMap::new();
            diagnostics.insert("mass".to_string(), 1.0);
            Ok(Trace { curve: vec![point], estimate: RatioEstimate { ratio: ones, j_hat: j, diagnostics } })
        }
    }
}

/// `max_s |ratio(s) - true ratio(s)|` over states the behaviour visits;
/// `None` when the estimator has no state correction.
pub fn max_ratio_error(ratio: &[f64], oracle: &OracleReport) -> Option<f64> {
    if ratio.is_empty() {
        return None;
    }
    Some(
        ratio
            .iter()
            .zip(&oracle.density_ratio)
            .zip(&oracle.d_mu)
            .filter(|(_, &d)| d > 0.0)
            .map(|((r, t), _)| (r - t).abs())
            .fold(0.0, f64::max),
    )
}
