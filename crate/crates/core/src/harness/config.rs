use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EstimatorSpec, HSpec};
use crate::dataset::TruncationPolicy;
use crate::envs;
use crate::error::{DiceError, Result};
use crate::estimators::InitialCorrection;

/// Sweep description. Every list is an axis of the cross product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub envs: Vec<String>,
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    /// Trajectories per dataset. May be omitted when `dataset_size` is given.
    #[serde(default)]
    pub num_traj: Vec<usize>,
    #[serde(default = "default_max_len")]
    pub max_len: Vec<usize>,
    /// Nominal transitions per dataset, `num_traj × max_len`.
    #[serde(default)]
    pub dataset_size: Vec<usize>,
    #[serde(default = "default_eps")]
    pub behaviour_eps: Vec<f64>,
    #[serde(default = "default_var_scale")]
    pub var_scale: Vec<f64>,
    pub estimators: Vec<EstimatorGrid>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub truncation: TruncationPolicy,
    pub output_dir: PathBuf,
}

fn default_gammas() -> Vec<f64> {
    vec![envs::DEFAULT_GAMMA]
}
fn default_max_len() -> Vec<usize> {
    vec![100]
}
fn default_eps() -> Vec<f64> {
    vec![0.3]
}
fn default_var_scale() -> Vec<f64> {
    vec![1.0]
}
fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

/// Estimator entry in a config; list-valued hyperparameters are crossed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorGrid {
    AvgDice,
    AvgDiceLinear {
        #[serde(default = "default_features")]
        features: String,
        #[serde(default)]
        feature_seed: u64,
        #[serde(default = "default_lambda1")]
        lambda1: Vec<f64>,
        #[serde(default = "default_lambda2")]
        lambda2: Vec<f64>,
        #[serde(default = "default_linear_lr")]
        lr: Vec<f64>,
        #[serde(default = "default_linear_epochs")]
        epochs: usize,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
        #[serde(default)]
        h: HSpec,
    },
    Td {
        #[serde(default = "default_td_lr")]
        lr: Vec<f64>,
        #[serde(default)]
        decay_power: Option<f64>,
        #[serde(default = "default_td_epochs")]
        epochs: usize,
    },
    CopTd {
        #[serde(default = "default_td_lr")]
        lr: Vec<f64>,
        #[serde(default)]
        decay_power: Option<f64>,
        #[serde(default = "default_td_epochs")]
        epochs: usize,
        #[serde(default)]
        correction: InitialCorrection,
    },
    AvgReward,
}

fn default_features() -> String {
    "onehot".into()
}
fn default_lambda1() -> Vec<f64> {
    vec![0.001]
}
fn default_lambda2() -> Vec<f64> {
    vec![0.5]
}
fn default_linear_lr() -> Vec<f64> {
    vec![0.0005]
}
fn default_linear_epochs() -> usize {
    2000
}
fn default_batch_size() -> usize {
    512
}
fn default_td_lr() -> Vec<f64> {
    vec![0.05]
}
fn default_td_epochs() -> usize {
    100
}

impl EstimatorGrid {
    /// The tuning grid `λ1 × λ2 × lr` for linear Average-DICE.
    pub fn tuning_grid() -> Self {
        EstimatorGrid::AvgDiceLinear {
            features: default_features(),
            feature_seed: 0,
            lambda1: vec![0.0, 0.001, 0.01, 0.1],
            lambda2: vec![0.5, 2.0, 10.0, 20.0],
            lr: vec![5e-5, 1e-4, 5e-4, 1e-3, 5e-3],
            epochs: default_linear_epochs(),
            batch_size: default_batch_size(),
            h: HSpec::Empirical,
        }
    }

    /// Concrete specs in `λ1`, `λ2`, `lr` nesting order.
    pub fn expand(&self) -> Vec<EstimatorSpec> {
        match self {
            EstimatorGrid::AvgDice => vec![EstimatorSpec::AvgDice],
            EstimatorGrid::AvgReward => vec![EstimatorSpec::AvgReward],
            EstimatorGrid::AvgDiceLinear { features, feature_seed, lambda1, lambda2, lr, epochs, batch_size, h } => {
                let mut out = Vec::new();
                for &l1 in lambda1 {
                    for &l2 in lambda2 {
                        for &a in lr {
                            out.push(EstimatorSpec::AvgDiceLinear {
                                features: features.clone(),
                                feature_seed: *feature_seed,
                                lambda1: l1,
                                lambda2: l2,
                                lr: a,
                                epochs: *epochs,
                                batch_size: *batch_size,
                                h: *h,
                            });
                        }
                    }
                }
                out
            }
            EstimatorGrid::Td { lr, decay_power, epochs } => {
                lr.iter().map(|&a| EstimatorSpec::Td { lr: a, decay_power: *decay_power, epochs: *epochs }).collect()
            }
            EstimatorGrid::CopTd { lr, decay_power, epochs, correction } => lr
                .iter()
                .map(|&a| EstimatorSpec::CopTd {
                    lr: a,
                    decay_power: *decay_power,
                    epochs: *epochs,
                    correction: *correction,
                })
                .collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, v: &[f64]| {
            if v.is_empty() {
                Err(DiceError::input(format!("estimator list '{name}' is empty")))
            } else {
                Ok(())
            }
        };
        match self {
            EstimatorGrid::AvgDiceLinear { features, lambda1, lambda2, lr, batch_size, .. } => {
                nonempty("lambda1", lambda1)?;
                nonempty("lambda2", lambda2)?;
                nonempty("lr", lr)?;
                crate::estimators::features::from_spec(features, 1, 0)?;
                if *batch_size == 0 {
                    return Err(DiceError::input("batch_size must be at least 1"));
                }
                if lambda1.iter().chain(lambda2).any(|&l| l.is_nan() || l < 0.0) {
                    return Err(DiceError::input("regularisation weights must be nonnegative"));
                }
                if lr.iter().any(|&a| !(a >= 0.0 && a.is_finite())) {
                    return Err(DiceError::input("learning rates must be nonnegative"));
                }
            }
            EstimatorGrid::Td { lr, decay_power, .. } | EstimatorGrid::CopTd { lr, decay_power, .. } => {
                nonempty("lr", lr)?;
                for &a in lr {
                    super::schedule(a, *decay_power).validate()?;
                }
            }
            EstimatorGrid::AvgDice | EstimatorGrid::AvgReward => {}
        }
        Ok(())
    }
}

/// One point of the data axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub env: String,
    pub gamma: f64,
    pub num_traj: usize,
    pub max_len: usize,
    pub behaviour_eps: f64,
    pub var_scale: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, empty: bool| {
            if empty {
                Err(DiceError::input(format!("config list '{name}' is empty")))
            } else {
                Ok(())
            }
        };
        check("envs", self.envs.is_empty())?;
        check("gammas", self.gammas.is_empty())?;
        check("max_len", self.max_len.is_empty())?;
        check("behaviour_eps", self.behaviour_eps.is_empty())?;
        check("var_scale", self.var_scale.is_empty())?;
        check("estimators", self.estimators.is_empty())?;
        check("seeds", self.seeds.is_empty())?;
        if self.num_traj.is_empty() && self.dataset_size.is_empty() {
            return Err(DiceError::input("config needs num_traj or dataset_size"));
        }
        for env in &self.envs {
            envs::parse_env(env, envs::DEFAULT_GAMMA)?;
        }
        if let Some(g) = self.gammas.iter().find(|&&g| !(g > 0.0 && g < 1.0)) {
            return Err(DiceError::input(format!("gamma {g} not in (0, 1)")));
        }
        if self.max_len.contains(&0) || self.num_traj.contains(&0) || self.dataset_size.contains(&0) {
            return Err(DiceError::input("num_traj, max_len and dataset_size must be positive"));
        }
        if let Some(e) = self.behaviour_eps.iter().find(|&&e| !(0.0..=1.0).contains(&e)) {
            return Err(DiceError::input(format!("behaviour_eps {e} not in [0, 1]")));
        }
        if let Some(v) = self.var_scale.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
            return Err(DiceError::input(format!("var_scale {v} must be positive")));
        }
        for e in &self.estimators {
            e.validate()?;
        }
        self.data_shapes()?;
        Ok(())
    }

    /// `(num_traj, max_len)` pairs. With only `dataset_size`, the trajectory
    /// count is `dataset_size / max_len`; with both, every product
    /// `num_traj × max_len` must be one of the listed sizes.
    pub fn data_shapes(&self) -> Result<Vec<(usize, usize)>> {
        let mut out = Vec::new();
        if self.num_traj.is_empty() {
            for &size in &self.dataset_size {
                for &len in &self.max_len {
                    if size % len != 0 {
                        return Err(DiceError::input(format!(
                            "dataset_size {size} is not a multiple of max_len {len}"
                        )));
                    }
                    out.push((size / len, len));
                }
            }
            return Ok(out);
        }
        for &k in &self.num_traj {
            for &len in &self.max_len {
                if !self.dataset_size.is_empty() && !self.dataset_size.contains(&(k * len)) {
                    return Err(DiceError::input(format!(
                        "num_traj {k} × max_len {len} = {} is not a listed dataset_size",
                        k * len
                    )));
                }
                out.push((k, len));
            }
        }
        Ok(out)
    }

    /// Data-axis cross product in config order: env, gamma, shape, eps, var_scale.
    pub fn data_points(&self) -> Result<Vec<DataPoint>> {
        let shapes = self.data_shapes()?;
        let mut out = Vec::new();
        for env in &self.envs {
            for &gamma in &self.gammas {
                for &(num_traj, max_len) in &shapes {
                    for &behaviour_eps in &self.behaviour_eps {
                        for &var_scale in &self.var_scale {
                            out.push(DataPoint {
                                env: env.clone(),
                                gamma,
                                num_traj,
                                max_len,
                                behaviour_eps,
                                var_scale,
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn estimator_specs(&self) -> Vec<EstimatorSpec> {
        self.estimators.iter().flat_map(|e| e.expand()).collect()
    }
}
