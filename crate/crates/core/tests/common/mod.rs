#![allow(dead_code)]

use dicelab::mdp::{Policy, TabularMdp};
use dicelab::rng::aux_rng;
use nalgebra::DMatrix;
use rand::Rng;

/// Random MDP with per-(s,a) termination in `[term_lo, term_hi]`, a random
/// target policy and a behaviour that mixes it half-and-half with uniform.
pub fn random_instance(
    num_states: usize,
    num_actions: usize,
    term_lo: f64,
    term_hi: f64,
    gamma: f64,
    seed: u64,
) -> (TabularMdp, Policy, Policy) {
    let mut rng = aux_rng(seed, 100);
    let mut transition = vec![vec![vec![0.0; num_states]; num_actions]; num_states];
    let mut termination = vec![vec![0.0; num_actions]; num_states];
    let mut reward = vec![vec![0.0; num_actions]; num_states];
    for s in 0..num_states {
        for a in 0..num_actions {
            let term = rng.random_range(term_lo..=term_hi);
            let w: Vec<f64> = (0..num_states).map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = w.iter().sum();
            for (sp, wi) in w.iter().enumerate() {
                transition[s][a][sp] = (1.0 - term) * wi / total;
            }
            termination[s][a] = 1.0 - transition[s][a].iter().sum::<f64>();
            reward[s][a] = rng.random::<f64>();
        }
    }
    let mut nu: Vec<f64> = (0..num_states).map(|_| rng.random::<f64>() + 0.1).collect();
    let total: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|x| *x /= total);
    let mdp = TabularMdp::new(num_states, num_actions, transition, termination, reward, nu, gamma).unwrap();
    let probs: Vec<Vec<f64>> = (0..num_states)
        .map(|_| {
            let w: Vec<f64> = (0..num_actions).map(|_| rng.random::<f64>() + 0.1).collect();
            let t: f64 = w.iter().sum();
            w.iter().map(|x| x / t).collect()
        })
        .collect();
    let target = Policy::new(probs).unwrap();
    let behaviour = target.mix_uniform(0.5).unwrap();
    (mdp, target, behaviour)
}

/// Gaussian `n × d` matrix with entries scaled by `scale`.
pub fn gaussian_features(n: usize, d: usize, scale: f64, seed: u64) -> DMatrix<f64> {
    dicelab::estimators::features::random_gaussian(n, d, seed) * scale
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std_error(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

/// `x ↦ xᵀ P` applied `j` times to `nu`, accumulated as
/// `(1-γ) Σ_{j ≤ terms} γ^j (Pᵀ)^j ν`.
pub fn neumann_occupancy(p: &[Vec<f64>], nu: &[f64], gamma: f64, terms: usize) -> Vec<f64> {
    let n = nu.len();
    let mut cur = nu.to_vec();
    let mut acc = vec![0.0; n];
    let mut w = 1.0 - gamma;
    for _ in 0..=terms {
        for s in 0..n {
            acc[s] += w * cur[s];
        }
        let mut next = vec![0.0; n];
        for (s, row) in p.iter().enumerate() {
            for (sp, &pr) in row.iter().enumerate() {
                next[sp] += cur[s] * pr;
            }
        }
        cur = next;
        w *= gamma;
    }
    acc
}
