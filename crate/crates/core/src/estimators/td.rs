//! Off-policy expected-SARSA on a tabular Q function.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{log_every, CurvePoint, RatioEstimate, StepSchedule};
use crate::dataset::TrajectoryDataset;
use crate::error::{DiceError, Result};
use crate::mdp::Policy;
use crate::rng::{aux_rng, permutation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdConfig {
    pub schedule: StepSchedule,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TdConfig {
    fn default() -> Self {
        TdConfig { schedule: StepSchedule::default(), epochs: 100, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct TdResult {
    pub q: Vec<Vec<f64>>,
    /// `ratio` is empty: TD does not produce a state correction.
    pub estimate: RatioEstimate,
    pub curve: Vec<CurvePoint>,
}

/// `(1-γ) Σ_s ν(s) Σ_a π(a|s) Q(s,a)`.
pub fn initial_value(q: &[Vec<f64>], initial_dist: &[f64], target: &Policy, gamma: f64) -> f64 {
    let v: f64 = initial_dist
        .iter()
        .enumerate()
        .map(|(s, &nu)| nu * target.row(s).iter().zip(&q[s]).map(|(p, q)| p * q).sum::<f64>())
        .sum();
    (1.0 - gamma) * v
}

/// Sweeps of `Q(s,a) += α (r + γ Σ_a' π(a'|s') Q(s',a') - Q(s,a))` over the
/// dataset in a fresh random order each epoch; `Q(TERMINAL, ·) = 0`.
pub fn off_policy_td(
    dataset: &TrajectoryDataset,
    initial_dist: &[f64],
    target: &Policy,
    gamma: f64,
    cfg: &TdConfig,
) -> Result<TdResult> {
    let ns = dataset.num_states();
    if initial_dist.len() != ns || target.num_states() != ns || target.num_actions() != dataset.header.num_actions {
        return Err(DiceError::input("target policy / initial distribution do not match the dataset"));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(DiceError::input(format!("gamma {gamma} not in [0, 1)")));
    }
    cfg.schedule.validate()?;
    let na = target.num_actions();
    let mut q = vec![vec![0.0; na]; ns];
    let records = dataset.records();
    let total = (records.len() * cfg.epochs) as u64;
    let every = log_every(total);
    let mut curve = vec![CurvePoint::value_only(0, initial_value(&q, initial_dist, target, gamma))];
    let mut rng = aux_rng(cfg.seed, 3);
    let mut step = 0u64;
    for _ in 0..cfg.epochs {
        for p in permutation(&mut rng, records.len()) {
            let r = &records[p];
            let next = match r.next_state {
                Some(s2) => target.row(s2).iter().zip(&q[s2]).map(|(pi, q)| pi * q).sum::<f64>(),
                None => 0.0,
            };
            let alpha = cfg.schedule.rate(step);
            let cell = &mut q[r.state][r.action];
            *cell += alpha * (r.reward + gamma * next - *cell);
            if !cell.is_finite() {
                return Err(DiceError::Numerical { step, message: "TD values diverged".into() });
            }
            step += 1;
            if step.is_multiple_of(every) || step == total {
                curve.push(CurvePoint::value_only(step, initial_value(&q, initial_dist, target, gamma)));
            }
        }
    }
    let j_hat = initial_value(&q, initial_dist, target, gamma);
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("steps".to_string(), step as f64);
    Ok(TdResult { q, estimate: RatioEstimate { ratio: Vec::new(), j_hat, diagnostics }, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, GenerateOptions};
    use crate::envs;
    use crate::mdp::TabularMdp;

    #[test]
    fn zero_rewards_give_zero() {
        let mdp = TabularMdp::new(
            2,
            1,
            vec![vec![vec![0.0, 0.7]], vec![vec![0.5, 0.0]]],
            vec![vec![0.3], vec![0.5]],
            vec![vec![0.0], vec![0.0]],
            vec![1.0, 0.0],
            0.9,
        )
        .unwrap();
        let p = Policy::uniform(2, 1);
        let ds = generate(&mdp, &p, &p, &GenerateOptions { num_trajectories: 20, ..Default::default() }).unwrap();
        let res = off_policy_td(&ds, mdp.initial_dist(), &p, 0.9, &TdConfig::default()).unwrap();
        assert!(res.q.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(res.estimate.j_hat, 0.0);
    }

    #[test]
    fn curve_is_step_monotone() {
        let env = envs::parse_env("chain:5", 0.9).unwrap();
        let mu = env.behaviour(0.3, 1.0).unwrap();
        let ds = generate(&env.mdp, &mu, &env.target, &GenerateOptions { num_trajectories: 20, ..Default::default() })
            .unwrap();
        let res =
            off_policy_td(&ds, env.mdp.initial_dist(), &env.target, 0.9, &TdConfig { epochs: 3, ..Default::default() })
                .unwrap();
        assert!(res.curve.windows(2).all(|w| w[0].step < w[1].step));
        assert_eq!(res.curve.last().unwrap().j_hat, res.estimate.j_hat);
    }
}
