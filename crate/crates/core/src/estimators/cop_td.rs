//! Ratio temporal-difference learning in the style of COP-TD.
//!
//! A tabular ratio `w` is pushed toward
//! `γ ρ(a|s) w(s) + (1-γ) ν̂(s')` at every arrival in `s'`. Trajectory starts
//! (time-0 records) count as arrivals with no predecessor, so the restart
//! chain's landings are part of the update just as they are part of `d_μ`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{estimate_j, log_every, CurvePoint, RatioEstimate, StepSchedule};
use crate::dataset::TrajectoryDataset;
use crate::error::{DiceError, Result};
use crate::rng::{aux_rng, permutation};

/// How the start-state term `(1-γ) ν̂(s')` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitialCorrection {
    /// `ν̂(s') = ν(s') / d̂(s')`, added at every arrival.
    #[default]
    DistributionRatio,
    /// `ν̂ = n / N` (N trajectories) at trajectory starts, 0 elsewhere.
    StartIndicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopTdConfig {
    pub schedule: StepSchedule,
    pub epochs: usize,
    pub seed: u64,
    pub correction: InitialCorrection,
}

impl Default for CopTdConfig {
    fn default() -> Self {
        CopTdConfig {
            schedule: StepSchedule::default(),
            epochs: 100,
            seed: 0,
            correction: InitialCorrection::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CopTdFit {
    pub estimate: RatioEstimate,
    pub curve: Vec<CurvePoint>,
}

struct Arrival {
    /// `(s, ρ(a|s))` of the predecessor; `None` for a trajectory start.
    from: Option<(usize, f64)>,
    to: usize,
}

pub fn cop_td(dataset: &TrajectoryDataset, initial_dist: &[f64], gamma: f64, cfg: &CopTdConfig) -> Result<CopTdFit> {
    let ns = dataset.num_states();
    if initial_dist.len() != ns {
        return Err(DiceError::input("initial distribution does not match the dataset"));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(DiceError::input(format!("gamma {gamma} not in [0, 1)")));
    }
    if dataset.is_empty() {
        return Err(DiceError::input("COP-TD needs a non-empty dataset"));
    }
    cfg.schedule.validate()?;

    let records = dataset.records();
    let mut arrivals = Vec::with_capacity(records.len() * 2);
    for r in records {
        if r.time == 0 {
            arrivals.push(Arrival { from: None, to: r.state });
        }
        if let Some(s2) = r.next_state {
            arrivals.push(Arrival { from: Some((r.state, r.rho_step)), to: s2 });
        }
    }

    let d_hat = dataset.state_frequencies();
    let starts = dataset.num_trajectories() as f64;
    let n = records.len() as f64;
    let base: Vec<f64> = (0..ns)
        .map(|s| match cfg.correction {
            InitialCorrection::DistributionRatio if d_hat[s] > 0.0 => (1.0 - gamma) * initial_dist[s] / d_hat[s],
            InitialCorrection::DistributionRatio => 0.0,
            InitialCorrection::StartIndicator => (1.0 - gamma) * n / starts,
        })
        .collect();

    let mut w = vec![1.0; ns];
    let total = (arrivals.len() * cfg.epochs) as u64;
    let every = log_every(total);
    let mut curve = vec![CurvePoint::from_ratio(dataset, 0, w.clone())?];
    let mut rng = aux_rng(cfg.seed, 5);
    let mut step = 0u64;
    for _ in 0..cfg.epochs {
        for p in permutation(&mut rng, arrivals.len()) {
            let a = &arrivals[p];
            let target = match (a.from, cfg.correction) {
                (Some((s, rho)), InitialCorrection::DistributionRatio) => gamma * rho * w[s] + base[a.to],
                (Some((s, rho)), InitialCorrection::StartIndicator) => gamma * rho * w[s],
                (None, _) => base[a.to],
            };
            let alpha = cfg.schedule.rate(step);
            let v = (w[a.to] + alpha * (target - w[a.to])).max(0.0);
            if !v.is_finite() {
                return Err(DiceError::Numerical { step, message: "COP-TD ratio diverged".into() });
            }
            w[a.to] = v;
            step += 1;
            if step.is_multiple_of(every) || step == total {
                curve.push(CurvePoint::from_ratio(dataset, step, w.clone())?);
            }
        }
    }
    let j_hat = estimate_j(dataset, &w)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("steps".to_string(), step as f64);
    diagnostics.insert("mass".to_string(), super::empirical_mass(dataset, &w));
    Ok(CopTdFit { estimate: RatioEstimate { ratio: w, j_hat, diagnostics }, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, GenerateOptions};
    use crate::envs;

    #[test]
    fn gamma_zero_recovers_start_ratio() {
        let env = envs::parse_env("chain:5", 0.9).unwrap();
        let mu = env.behaviour(0.3, 1.0).unwrap();
        let ds = generate(&env.mdp, &mu, &env.target, &GenerateOptions { num_trajectories: 50, ..Default::default() })
            .unwrap();
        let cfg = CopTdConfig { schedule: StepSchedule::constant(0.05), epochs: 50, ..Default::default() };
        let fit = cop_td(&ds, env.mdp.initial_dist(), 0.0, &cfg).unwrap();
        let d = ds.state_frequencies();
        let nu = env.mdp.initial_dist();
        // every arrival targets ν(s')/d̂(s'), so the iterate settles on it
        for s in 0..5 {
            let want = if d[s] > 0.0 { nu[s] / d[s] } else { 1.0 };
            assert!((fit.estimate.ratio[s] - want).abs() < 1e-6, "state {s}: {} vs {want}", fit.estimate.ratio[s]);
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let env = envs::parse_env("chain:5", 0.9).unwrap();
        let ds = TrajectoryDataset::from_records(
            generate(
                &env.mdp,
                &env.target,
                &env.target,
                &GenerateOptions { num_trajectories: 1, ..Default::default() },
            )
            .unwrap()
            .header,
            vec![],
        )
        .unwrap();
        assert!(cop_td(&ds, env.mdp.initial_dist(), 0.9, &CopTdConfig::default()).is_err());
    }
}
