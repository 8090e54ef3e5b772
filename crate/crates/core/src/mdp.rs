//! Finite episodic MDPs, stochastic policies and trajectory sampling.
//!
//! Termination is stored as explicit probability mass per state-action pair,
//! so `transition[s][a]` is sub-stochastic over the non-terminal states and
//! `transition[s][a].sum() + termination[s][a] == 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{DiceError, Result};
use crate::rng::{sample_categorical, trajectory_rng};

pub const PROB_TOL: f64 = 1e-12;

pub const DEFAULT_MAX_LEN: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMdp", into = "RawMdp")]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    transition: Vec<Vec<Vec<f64>>>,
    termination: Vec<Vec<f64>>,
    reward: Vec<Vec<f64>>,
    initial_dist: Vec<f64>,
    discount: f64,
}

/// Wire form of [`TabularMdp`]; validated on conversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub termination: Vec<Vec<f64>>,
    pub reward: Vec<Vec<f64>>,
    pub initial_dist: Vec<f64>,
    pub discount: f64,
}

impl TryFrom<RawMdp> for TabularMdp {
    type Error = DiceError;

    fn try_from(raw: RawMdp) -> Result<Self> {
        TabularMdp::new(
            raw.num_states,
            raw.num_actions,
            raw.transition,
            raw.termination,
            raw.reward,
            raw.initial_dist,
            raw.discount,
        )
    }
}

impl From<TabularMdp> for RawMdp {
    fn from(m: TabularMdp) -> Self {
        RawMdp {
            num_states: m.num_states,
            num_actions: m.num_actions,
            transition: m.transition,
            termination: m.termination,
            reward: m.reward,
            initial_dist: m.initial_dist,
            discount: m.discount,
        }
    }
}

fn check_prob(x: f64, what: &str) -> Result<()> {
    if !x.is_finite() || x < 0.0 {
        return Err(DiceError::input(format!("{what} = {x} is not a probability")));
    }
    Ok(())
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<Vec<Vec<f64>>>,
        termination: Vec<Vec<f64>>,
        reward: Vec<Vec<f64>>,
        initial_dist: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(DiceError::input("num_states and num_actions must be positive"));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(DiceError::input(format!("discount {discount} not in (0, 1)")));
        }
        let dims_ok = transition.len() == num_states
            && termination.len() == num_states
            && reward.len() == num_states
            && initial_dist.len() == num_states
            && transition.iter().all(|row| row.len() == num_actions && row.iter().all(|p| p.len() == num_states))
            && termination.iter().all(|row| row.len() == num_actions)
            && reward.iter().all(|row| row.len() == num_actions);
        if !dims_ok {
            return Err(DiceError::input(format!(
                "tensor shapes do not match {num_states} states x {num_actions} actions"
            )));
        }
        for s in 0..num_states {
            for a in 0..num_actions {
                let mut total = 0.0;
                for (sp, &p) in transition[s][a].iter().enumerate() {
                    check_prob(p, &format!("transition[{s}][{a}][{sp}]"))?;
                    total += p;
                }
                let t = termination[s][a];
                check_prob(t, &format!("termination[{s}][{a}]"))?;
                if (total + t - 1.0).abs() > PROB_TOL {
                    return Err(DiceError::input(format!("row ({s},{a}) sums to {} instead of 1", total + t)));
                }
                if !reward[s][a].is_finite() {
                    return Err(DiceError::input(format!("reward[{s}][{a}] is not finite")));
                }
            }
        }
        for (s, &p) in initial_dist.iter().enumerate() {
            check_prob(p, &format!("initial_dist[{s}]"))?;
        }
        let nu_sum: f64 = initial_dist.iter().sum();
        if (nu_sum - 1.0).abs() > PROB_TOL {
            return Err(DiceError::input(format!("initial_dist sums to {nu_sum}")));
        }
        Ok(TabularMdp { num_states, num_actions, transition, termination, reward, initial_dist, discount })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[s][a]
    }

    pub fn termination(&self, s: usize, a: usize) -> f64 {
        self.termination[s][a]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s][a]
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Same dynamics under a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        if !(discount > 0.0 && discount < 1.0) {
            return Err(DiceError::input(format!("discount {discount} not in (0, 1)")));
        }
        Ok(TabularMdp { discount, ..self.clone() })
    }

    pub fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.num_states() != self.num_states || policy.num_actions() != self.num_actions {
            return Err(DiceError::input(format!(
                "policy is {}x{} but mdp has {} states and {} actions",
                policy.num_states(),
                policy.num_actions(),
                self.num_states,
                self.num_actions
            )));
        }
        Ok(())
    }

    /// Expected reward per state under `policy`.
    pub fn policy_reward(&self, policy: &Policy) -> Vec<f64> {
        (0..self.num_states)
            .map(|s| (0..self.num_actions).map(|a| policy.prob(s, a) * self.reward[s][a]).sum())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy", into = "RawPolicy")]
pub struct Policy {
    probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawPolicy {
    pub probs: Vec<Vec<f64>>,
}

impl TryFrom<RawPolicy> for Policy {
    type Error = DiceError;
    fn try_from(raw: RawPolicy) -> Result<Self> {
        Policy::new(raw.probs)
    }
}

impl From<Policy> for RawPolicy {
    fn from(p: Policy) -> Self {
        RawPolicy { probs: p.probs }
    }
}

impl Policy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = probs.first() else {
            return Err(DiceError::input("policy has no states"));
        };
        let na = first.len();
        if na == 0 {
            return Err(DiceError::input("policy has no actions"));
        }
        for (s, row) in probs.iter().enumerate() {
            if row.len() != na {
                return Err(DiceError::input(format!("policy row {s} has {} actions", row.len())));
            }
            for (a, &p) in row.iter().enumerate() {
                check_prob(p, &format!("policy[{s}][{a}]"))?;
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > PROB_TOL {
                return Err(DiceError::input(format!("policy row {s} sums to {total}")));
            }
        }
        Ok(Policy { probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Policy { probs: vec![vec![p; num_actions]; num_states] }
    }

    pub fn num_states(&self) -> usize {
        self.probs.len()
    }

    pub fn num_actions(&self) -> usize {
        self.probs[0].len()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s]
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    /// `(1 - eps) * self + eps * uniform`.
    pub fn mix_uniform(&self, eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(DiceError::input(format!("mixing weight {eps} not in [0, 1]")));
        }
        let u = 1.0 / self.num_actions() as f64;
        let probs = self.probs.iter().map(|row| row.iter().map(|&p| (1.0 - eps) * p + eps * u).collect()).collect();
        Ok(Policy { probs })
    }

    /// Flatten (`scale > 1`) or sharpen (`scale < 1`) each row by raising
    /// probabilities to `1 / scale` and renormalising. Zero entries stay zero.
    pub fn temper(&self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(DiceError::input(format!("temper scale {scale} must be positive")));
        }
        let probs = self
            .probs
            .iter()
            .map(|row| {
                let w: Vec<f64> = row.iter().map(|&p| if p > 0.0 { p.powf(1.0 / scale) } else { 0.0 }).collect();
                let z: f64 = w.iter().sum();
                w.into_iter().map(|x| x / z).collect()
            })
            .collect();
        Ok(Policy { probs })
    }

    /// Short content hash (first 16 hex chars of SHA-256 over the
    /// little-endian bit patterns) used as dataset provenance.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_states() as u64).to_le_bytes());
        h.update((self.num_actions() as u64).to_le_bytes());
        for row in &self.probs {
            for p in row {
                h.update(p.to_bits().to_le_bytes());
            }
        }
        let digest = h.finalize();
        hex::encode(&digest[..8])
    }
}

/// Markov chain induced on the non-terminal states by a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    /// Sub-stochastic transitions among non-terminal states.
    pub p_pi: Vec<Vec<f64>>,
    pub term_prob: Vec<f64>,
    /// `p_pi + term_prob ⊗ initial_dist`: termination redirected to a restart.
    pub restart_chain: Vec<Vec<f64>>,
}

impl MarkovChain {
    pub fn num_states(&self) -> usize {
        self.term_prob.len()
    }
}

pub fn build_chain(mdp: &TabularMdp, policy: &Policy) -> Result<MarkovChain> {
    mdp.check_policy(policy)?;
    let ns = mdp.num_states();
    let mut p_pi = vec![vec![0.0; ns]; ns];
    let mut term_prob = vec![0.0; ns];
    for s in 0..ns {
        for a in 0..mdp.num_actions() {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for (sp, &p) in mdp.transition(s, a).iter().enumerate() {
                p_pi[s][sp] += w * p;
            }
            term_prob[s] += w * mdp.termination(s, a);
        }
    }
    let nu = mdp.initial_dist();
    let restart_chain =
        p_pi.iter().zip(&term_prob).map(|(row, &t)| row.iter().zip(nu).map(|(&p, &v)| p + t * v).collect()).collect();
    Ok(MarkovChain { p_pi, term_prob, restart_chain })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    /// `None` when the step entered the termination state.
    pub next_state: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// True when the trajectory ended by entering the termination state,
    /// false when it was cut at `max_len`.
    pub terminated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Draw the successor of `(s, a)`; `None` is the termination state.
pub fn sample_next<R: Rng + ?Sized>(mdp: &TabularMdp, s: usize, a: usize, rng: &mut R) -> Option<usize> {
    let u: f64 = rng.random();
    let row = mdp.transition(s, a);
    let mut acc = 0.0;
    for (sp, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return Some(sp);
        }
    }
    if mdp.termination(s, a) > 0.0 {
        None
    } else {
        row.iter().rposition(|&p| p > 0.0)
    }
}

pub fn sample_trajectory_with<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    rng: &mut R,
    max_len: usize,
) -> Result<Trajectory> {
    mdp.check_policy(policy)?;
    if max_len == 0 {
        return Err(DiceError::input("max_len must be at least 1"));
    }
    let mut steps = Vec::new();
    let mut s = sample_categorical(rng, mdp.initial_dist());
    loop {
        let a = sample_categorical(rng, policy.row(s));
        let next = sample_next(mdp, s, a, rng);
        steps.push(Step { state: s, action: a, reward: mdp.reward(s, a), next_state: next });
        match next {
            None => return Ok(Trajectory { steps, terminated: true }),
            Some(_) if steps.len() >= max_len => return Ok(Trajectory { steps, terminated: false }),
            Some(sp) => s = sp,
        }
    }
}

/// Sample one trajectory from the generator for `(run_seed, index)`.
pub fn sample_trajectory(
    mdp: &TabularMdp,
    policy: &Policy,
    run_seed: u64,
    index: u64,
    max_len: usize,
) -> Result<Trajectory> {
    let mut rng = trajectory_rng(run_seed, index);
    sample_trajectory_with(mdp, policy, &mut rng, max_len)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn one_state(termination: f64, reward: f64, gamma: f64) -> TabularMdp {
        TabularMdp::new(
            1,
            1,
            vec![vec![vec![1.0 - termination]]],
            vec![vec![termination]],
            vec![vec![reward]],
            vec![1.0],
            gamma,
        )
        .unwrap()
    }

    #[test]
    fn absorbing_termination_restarts_to_only_state() {
        let mdp = one_state(1.0, 0.0, 0.9);
        let chain = build_chain(&mdp, &Policy::uniform(1, 1)).unwrap();
        assert_eq!(chain.p_pi, vec![vec![0.0]]);
        assert_eq!(chain.term_prob, vec![1.0]);
        assert_eq!(chain.restart_chain, vec![vec![1.0]]);
    }

    #[test]
    fn mixture_of_self_loop_and_terminate() {
        let mdp = TabularMdp::new(
            1,
            2,
            vec![vec![vec![1.0], vec![0.0]]],
            vec![vec![0.0, 1.0]],
            vec![vec![0.0, 0.0]],
            vec![1.0],
            0.9,
        )
        .unwrap();
        let chain = build_chain(&mdp, &Policy::uniform(1, 2)).unwrap();
        assert_eq!(chain.p_pi, vec![vec![0.5]]);
        assert_eq!(chain.term_prob, vec![0.5]);
    }

    #[test]
    fn chain_rows_match_direct_summation() {
        let mdp = crate::envs::chain(3, 0.1, 0.9).unwrap();
        let pol = Policy::new(vec![vec![0.3, 0.7], vec![0.5, 0.5], vec![0.2, 0.8]]).unwrap();
        let chain = build_chain(&mdp, &pol).unwrap();
        for s in 0..3 {
            for sp in 0..3 {
                let mut direct = 0.0;
                for a in 0..2 {
                    direct += pol.prob(s, a) * mdp.transition(s, a)[sp];
                }
                assert!((chain.p_pi[s][sp] - direct).abs() < 1e-15);
            }
            let t: f64 = (0..2).map(|a| pol.prob(s, a) * mdp.termination(s, a)).sum();
            assert!((chain.term_prob[s] - t).abs() < 1e-15);
            let row: f64 = chain.restart_chain[s].iter().sum();
            assert!((row - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mdp = one_state(1.0, 0.0, 0.9);
        assert!(matches!(build_chain(&mdp, &Policy::uniform(2, 1)), Err(DiceError::InvalidInput(_))));
    }

    #[test]
    fn invalid_mdps_are_rejected() {
        let bad_row = TabularMdp::new(1, 1, vec![vec![vec![0.5]]], vec![vec![0.4]], vec![vec![0.0]], vec![1.0], 0.9);
        assert!(bad_row.is_err());
        let bad_gamma = TabularMdp::new(1, 1, vec![vec![vec![0.0]]], vec![vec![1.0]], vec![vec![0.0]], vec![1.0], 1.0);
        assert!(bad_gamma.is_err());
        let bad_nu = TabularMdp::new(1, 1, vec![vec![vec![0.0]]], vec![vec![1.0]], vec![vec![0.0]], vec![0.9], 0.5);
        assert!(bad_nu.is_err());
        assert!(Policy::new(vec![vec![0.6, 0.6]]).is_err());
        assert!(Policy::new(vec![vec![-0.1, 1.1]]).is_err());
    }

    #[test]
    fn forced_termination_gives_length_one() {
        let mdp = one_state(1.0, 1.0, 0.9);
        let t = sample_trajectory(&mdp, &Policy::uniform(1, 1), 5, 0, 100).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.terminated);
        assert_eq!(t.steps[0].next_state, None);
    }

    #[test]
    fn self_loop_is_truncated() {
        let mdp = one_state(0.0, 1.0, 0.9);
        let t = sample_trajectory(&mdp, &Policy::uniform(1, 1), 5, 0, 10).unwrap();
        assert_eq!(t.len(), 10);
        assert!(!t.terminated);
        assert!(sample_trajectory(&mdp, &Policy::uniform(1, 1), 5, 0, 0).is_err());
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let mdp = crate::envs::chain(5, 0.1, 0.9).unwrap();
        let pol = Policy::uniform(5, 2);
        let a = sample_trajectory(&mdp, &pol, 11, 4, 100).unwrap();
        let b = sample_trajectory(&mdp, &pol, 11, 4, 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mixing_and_tempering() {
        let p = Policy::new(vec![vec![1.0, 0.0]]).unwrap();
        let m = p.mix_uniform(0.3).unwrap();
        assert!((m.prob(0, 0) - 0.85).abs() < 1e-15);
        assert!((m.prob(0, 1) - 0.15).abs() < 1e-15);
        let q = Policy::new(vec![vec![0.8, 0.2]]).unwrap();
        let t = q.temper(1.0).unwrap();
        assert!((t.prob(0, 0) - 0.8).abs() < 1e-15);
        let flat = q.temper(1e6).unwrap();
        assert!((flat.prob(0, 0) - 0.5).abs() < 1e-5);
        assert_ne!(p.content_hash(), m.content_hash());
        assert_eq!(m.content_hash(), p.mix_uniform(0.3).unwrap().content_hash());
    }

    #[test]
    fn json_round_trip() {
        let mdp = crate::envs::chain(4, 0.1, 0.95).unwrap();
        let back = TabularMdp::from_json(&mdp.to_json().unwrap()).unwrap();
        assert_eq!(mdp, back);
        assert!(TabularMdp::from_json(r#"{"num_states":1,"num_actions":1,"transition":[[[0.5]]],"termination":[[0.0]],"reward":[[0]],"initial_dist":[1],"discount":0.9}"#).is_err());
    }
}
