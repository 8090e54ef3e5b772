//! Off-policy trajectory datasets.
//!
//! A dataset is a flat, ordered list of transitions. Each record carries its
//! step index within the trajectory and the importance-sampling product of
//! all strictly earlier steps, so estimators never need to re-walk
//! trajectories. The discount is not baked in: one dataset serves every γ.
//!
//! On disk the dataset is JSON Lines. The first line is a [`DatasetHeader`],
//! every following line one [`TransitionRecord`]. A terminal successor is
//! written as `"next_state": null`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DiceError, Result};
use crate::mdp::{sample_next, sample_trajectory, Policy, TabularMdp};
use crate::rng::{aux_rng, sample_categorical, DiceRng};

pub const FORMAT_VERSION: u32 = 1;

/// Relative tolerance for the `rho_prod` telescoping check on load.
pub const TELESCOPE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: Option<usize>,
    pub time: u64,
    pub rho_step: f64,
    pub rho_prod: f64,
    pub traj_id: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncationPolicy {
    /// Keep trajectories cut at `max_len`. They add records but do not count
    /// towards the completed-trajectory total K.
    #[default]
    Include,
    Exclude,
    Error,
}

impl std::str::FromStr for TruncationPolicy {
    type Err = DiceError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "include" => Ok(Self::Include),
            "exclude" => Ok(Self::Exclude),
            "error" => Ok(Self::Error),
            _ => Err(DiceError::input(format!("unknown truncation policy '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub num_states: usize,
    pub num_actions: usize,
    pub seed: u64,
    pub behaviour_hash: String,
    pub target_hash: String,
    pub max_len: usize,
    pub truncation: TruncationPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behaviour_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub header: DatasetHeader,
    records: Vec<TransitionRecord>,
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub num_trajectories: usize,
    pub max_len: usize,
    pub seed: u64,
    pub truncation: TruncationPolicy,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            num_trajectories: 100,
            max_len: crate::mdp::DEFAULT_MAX_LEN,
            seed: 0,
            truncation: TruncationPolicy::Include,
        }
    }
}

/// Every action the target may take must be possible under the behaviour.
pub fn check_support(target: &Policy, behaviour: &Policy) -> Result<()> {
    if target.num_states() != behaviour.num_states() || target.num_actions() != behaviour.num_actions() {
        return Err(DiceError::input("target and behaviour policies have different shapes"));
    }
    for s in 0..target.num_states() {
        for a in 0..target.num_actions() {
            if target.prob(s, a) > 0.0 && behaviour.prob(s, a) <= 0.0 {
                return Err(DiceError::input(format!("behaviour has no support for target action ({s},{a})")));
            }
        }
    }
    Ok(())
}

pub fn generate(
    mdp: &TabularMdp,
    behaviour: &Policy,
    target: &Policy,
    opts: &GenerateOptions,
) -> Result<TrajectoryDataset> {
    mdp.check_policy(behaviour)?;
    mdp.check_policy(target)?;
    check_support(target, behaviour)?;
    if opts.max_len == 0 {
        return Err(DiceError::input("max_len must be at least 1"));
    }

    let trajectories: Vec<_> = (0..opts.num_trajectories as u64)
        .into_par_iter()
        .map(|i| sample_trajectory(mdp, behaviour, opts.seed, i, opts.max_len))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut next_id = 0u64;
    for (i, traj) in trajectories.iter().enumerate() {
        if !traj.terminated {
            match opts.truncation {
                TruncationPolicy::Include => {}
                TruncationPolicy::Exclude => continue,
                TruncationPolicy::Error => {
                    return Err(DiceError::input(format!(
                        "trajectory {i} reached max_len {} without terminating",
                        opts.max_len
                    )))
                }
            }
        }
        let mut rho_prod = 1.0;
        for (t, step) in traj.steps.iter().enumerate() {
            let rho_step = target.prob(step.state, step.action) / behaviour.prob(step.state, step.action);
            records.push(TransitionRecord {
                state: step.state,
                action: step.action,
                reward: step.reward,
                next_state: step.next_state,
                time: t as u64,
                rho_step,
                rho_prod,
                traj_id: next_id,
            });
            rho_prod *= rho_step;
        }
        next_id += 1;
    }

    let header = DatasetHeader {
        version: FORMAT_VERSION,
        num_states: mdp.num_states(),
        num_actions: mdp.num_actions(),
        seed: opts.seed,
        behaviour_hash: behaviour.content_hash(),
        target_hash: target.content_hash(),
        max_len: opts.max_len,
        truncation: opts.truncation,
        env: None,
        behaviour_eps: None,
        var_scale: None,
    };
    Ok(TrajectoryDataset { header, records })
}

impl TrajectoryDataset {
    /// Build from parts, checking every structural invariant.
    pub fn from_records(header: DatasetHeader, records: Vec<TransitionRecord>) -> Result<Self> {
        let ds = TrajectoryDataset { header, records };
        ds.validate()?;
        Ok(ds)
    }

    pub fn records(&self) -> &[TransitionRecord] {
        &self.records
    }

    pub fn num_states(&self) -> usize {
        self.header.num_states
    }

    /// n
    pub fn num_transitions(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of distinct trajectories, completed or not.
    pub fn num_trajectories(&self) -> usize {
        self.records.last().map_or(0, |r| r.traj_id as usize + 1)
    }

    /// K: trajectories that ended in the termination state.
    pub fn completed_trajectories(&self) -> usize {
        self.records.iter().filter(|r| r.next_state.is_none()).count()
    }

    /// `n / K` with K the completed-trajectory count; the empirical estimate
    /// of the mean trajectory length used as the ratio multiplier.
    pub fn n_over_k(&self) -> Result<f64> {
        let k = self.completed_trajectories();
        if k == 0 {
            return Err(DiceError::input("dataset has no completed trajectories"));
        }
        Ok(self.num_transitions() as f64 / k as f64)
    }

    /// Empirical sampling distribution `|I_s| / n`.
    pub fn state_frequencies(&self) -> Vec<f64> {
        let mut freq = vec![0.0; self.num_states()];
        let n = self.num_transitions() as f64;
        for r in &self.records {
            freq[r.state] += 1.0;
        }
        if n > 0.0 {
            freq.iter_mut().for_each(|f| *f /= n);
        }
        freq
    }

    /// `I_s`: positions of the records in each visited state. Unvisited
    /// states are absent.
    pub fn index_by_state(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut idx: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (p, r) in self.records.iter().enumerate() {
            idx.entry(r.state).or_default().push(p);
        }
        idx
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.header;
        let bad = |p: usize, msg: String| DiceError::Integrity(format!("record {p}: {msg}"));
        for (p, r) in self.records.iter().enumerate() {
            if r.state >= h.num_states || r.action >= h.num_actions {
                return Err(bad(p, format!("state/action ({}, {}) out of range", r.state, r.action)));
            }
            if let Some(sp) = r.next_state {
                if sp >= h.num_states {
                    return Err(bad(p, format!("next_state {sp} out of range")));
                }
            }
            if !(r.rho_step.is_finite() && r.rho_step >= 0.0 && r.rho_prod.is_finite() && r.rho_prod >= 0.0) {
                return Err(bad(p, "importance ratios must be finite and nonnegative".into()));
            }
            if !r.reward.is_finite() {
                return Err(bad(p, "reward is not finite".into()));
            }
            let first_of_traj = p == 0 || self.records[p - 1].traj_id != r.traj_id;
            if first_of_traj {
                let expected_id = if p == 0 { 0 } else { self.records[p - 1].traj_id + 1 };
                if r.traj_id != expected_id {
                    return Err(bad(p, format!("traj_id {} where {expected_id} was expected", r.traj_id)));
                }
                if r.time != 0 {
                    return Err(bad(p, format!("trajectory starts at time {}", r.time)));
                }
                if r.rho_prod != 1.0 {
                    return Err(bad(p, format!("rho_prod at time 0 is {}", r.rho_prod)));
                }
            } else {
                let prev = &self.records[p - 1];
                if r.time != prev.time + 1 {
                    return Err(bad(p, format!("time {} follows {}", r.time, prev.time)));
                }
                if prev.next_state != Some(r.state) {
                    return Err(bad(p, format!("state {} does not continue {:?}", r.state, prev.next_state)));
                }
                let expected = prev.rho_prod * prev.rho_step;
                if (r.rho_prod - expected).abs() > TELESCOPE_TOL * expected.abs().max(f64::MIN_POSITIVE) {
                    return Err(bad(p, format!("rho_prod {} but product of earlier steps is {expected}", r.rho_prod)));
                }
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header: DatasetHeader = match lines.next() {
            Some((_, line)) => {
                serde_json::from_str(&line?).map_err(|e| DiceError::Parse { line: 1, message: e.to_string() })?
            }
            None => return Err(DiceError::Parse { line: 1, message: "missing header".into() }),
        };
        if header.version != FORMAT_VERSION {
            return Err(DiceError::Parse {
                line: 1,
                message: format!("unsupported format version {}", header.version),
            });
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: TransitionRecord =
                serde_json::from_str(&line).map_err(|e| DiceError::Parse { line: i + 1, message: e.to_string() })?;
            records.push(r);
        }
        Self::from_records(header, records)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_jsonl(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_jsonl(BufReader::new(File::open(path)?))
    }
}

/// Endless behaviour transitions with restarts: when a trajectory ends the
/// next record starts a new one from the initial distribution, with time
/// and IS product reset. Never truncates.
pub struct RestartStream<'a> {
    mdp: &'a TabularMdp,
    behaviour: &'a Policy,
    target: &'a Policy,
    rng: DiceRng,
    state: usize,
    time: u64,
    rho_prod: f64,
    traj_id: u64,
}

impl<'a> RestartStream<'a> {
    pub fn new(mdp: &'a TabularMdp, behaviour: &'a Policy, target: &'a Policy, seed: u64) -> Result<Self> {
        mdp.check_policy(behaviour)?;
        mdp.check_policy(target)?;
        check_support(target, behaviour)?;
        let mut rng = aux_rng(seed, 1);
        let state = sample_categorical(&mut rng, mdp.initial_dist());
        Ok(RestartStream { mdp, behaviour, target, rng, state, time: 0, rho_prod: 1.0, traj_id: 0 })
    }

    pub fn completed_trajectories(&self) -> u64 {
        self.traj_id
    }
}

impl Iterator for RestartStream<'_> {
    type Item = TransitionRecord;

    fn next(&mut self) -> Option<TransitionRecord> {
        let s = self.state;
        let a = sample_categorical(&mut self.rng, self.behaviour.row(s));
        let next = sample_next(self.mdp, s, a, &mut self.rng);
        let rho_step = self.target.prob(s, a) / self.behaviour.prob(s, a);
        let rec = TransitionRecord {
            state: s,
            action: a,
            reward: self.mdp.reward(s, a),
            next_state: next,
            time: self.time,
            rho_step,
            rho_prod: self.rho_prod,
            traj_id: self.traj_id,
        };
        match next {
            Some(sp) => {
                self.state = sp;
                self.time += 1;
                self.rho_prod *= rho_step;
            }
            None => {
                self.state = sample_categorical(&mut self.rng, self.mdp.initial_dist());
                self.time = 0;
                self.rho_prod = 1.0;
                self.traj_id += 1;
            }
        }
        Some(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;

    fn chain5(eps: f64) -> (envs::BuiltinEnv, Policy) {
        let env = envs::parse_env("chain:5", 0.9).unwrap();
        let mu = env.behaviour(eps, 1.0).unwrap();
        (env, mu)
    }

    #[test]
    fn on_policy_ratios_are_one() {
        let (env, _) = chain5(0.0);
        let opts = GenerateOptions { num_trajectories: 20, ..Default::default() };
        let ds = generate(&env.mdp, &env.target, &env.target, &opts).unwrap();
        assert!(ds.records().iter().all(|r| r.rho_step == 1.0 && r.rho_prod == 1.0));
    }

    #[test]
    fn single_step_dataset() {
        let mdp =
            TabularMdp::new(1, 1, vec![vec![vec![0.0]]], vec![vec![1.0]], vec![vec![1.0]], vec![1.0], 0.5).unwrap();
        let pol = Policy::uniform(1, 1);
        let opts = GenerateOptions { num_trajectories: 1, ..Default::default() };
        let ds = generate(&mdp, &pol, &pol, &opts).unwrap();
        assert_eq!(ds.num_transitions(), 1);
        assert_eq!(ds.records()[0].time, 0);
        assert_eq!(ds.records()[0].rho_prod, 1.0);
        assert_eq!(ds.completed_trajectories(), 1);
    }

    #[test]
    fn support_violation_names_the_pair() {
        let (env, _) = chain5(0.0);
        let mu = Policy::new(vec![vec![1.0, 0.0]; 5]).unwrap();
        let err = generate(&env.mdp, &mu, &env.target, &GenerateOptions::default()).unwrap_err();
        assert!(err.to_string().contains("(0,1)"), "{err}");
    }

    #[test]
    fn truncation_policies() {
        let mdp =
            TabularMdp::new(1, 1, vec![vec![vec![1.0]]], vec![vec![0.0]], vec![vec![1.0]], vec![1.0], 0.5).unwrap();
        let pol = Policy::uniform(1, 1);
        let mut opts = GenerateOptions { num_trajectories: 3, max_len: 4, ..Default::default() };
        let inc = generate(&mdp, &pol, &pol, &opts).unwrap();
        assert_eq!(inc.num_transitions(), 12);
        assert_eq!(inc.num_trajectories(), 3);
        assert_eq!(inc.completed_trajectories(), 0);
        assert!(inc.n_over_k().is_err());
        opts.truncation = TruncationPolicy::Exclude;
        assert!(generate(&mdp, &pol, &pol, &opts).unwrap().is_empty());
        opts.truncation = TruncationPolicy::Error;
        assert!(generate(&mdp, &pol, &pol, &opts).is_err());
    }

    #[test]
    fn telescoping_and_ids() {
        let (env, mu) = chain5(0.3);
        let opts = GenerateOptions { num_trajectories: 50, seed: 9, ..Default::default() };
        let ds = generate(&env.mdp, &mu, &env.target, &opts).unwrap();
        ds.validate().unwrap();
        assert_eq!(ds.num_trajectories(), 50);
    }

    #[test]
    fn empty_dataset_has_header_only() {
        let (env, mu) = chain5(0.3);
        let opts = GenerateOptions { num_trajectories: 0, ..Default::default() };
        let ds = generate(&env.mdp, &mu, &env.target, &opts).unwrap();
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        let back = TrajectoryDataset::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn single_record_line_has_all_fields() {
        let r = TransitionRecord {
            state: 2,
            action: 1,
            reward: 0.5,
            next_state: None,
            time: 0,
            rho_step: 1.5,
            rho_prod: 1.0,
            traj_id: 0,
        };
        let v: serde_json::Value = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        let obj = v.as_object().unwrap();
        for key in ["state", "action", "reward", "next_state", "time", "rho_step", "rho_prod", "traj_id"] {
            assert!(obj.contains_key(key), "{key}");
        }
        assert!(obj["next_state"].is_null());
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let (env, mu) = chain5(0.3);
        let opts = GenerateOptions { num_trajectories: 2, seed: 1, ..Default::default() };
        let ds = generate(&env.mdp, &mu, &env.target, &opts).unwrap();
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let mut lines: Vec<String> = String::from_utf8(buf).unwrap().lines().map(String::from).collect();
        lines[2] = "{not json".into();
        let err = TrajectoryDataset::read_jsonl(lines.join("\n").as_bytes()).unwrap_err();
        assert!(matches!(err, DiceError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn broken_telescoping_is_an_integrity_error() {
        let (env, mu) = chain5(0.5);
        let opts = GenerateOptions { num_trajectories: 5, seed: 2, ..Default::default() };
        let ds = generate(&env.mdp, &mu, &env.target, &opts).unwrap();
        let mut recs = ds.records().to_vec();
        let p = recs.iter().position(|r| r.time == 1).unwrap();
        recs[p].rho_prod *= 1.001;
        let err = TrajectoryDataset::from_records(ds.header.clone(), recs).unwrap_err();
        assert!(matches!(err, DiceError::Integrity(_)));
    }

    #[test]
    fn index_by_state_single_state() {
        let mdp =
            TabularMdp::new(1, 1, vec![vec![vec![0.5]]], vec![vec![0.5]], vec![vec![1.0]], vec![1.0], 0.5).unwrap();
        let pol = Policy::uniform(1, 1);
        let opts = GenerateOptions { num_trajectories: 10, ..Default::default() };
        let ds = generate(&mdp, &pol, &pol, &opts).unwrap();
        let idx = ds.index_by_state();
        assert_eq!(idx.len(), 1);
        assert_eq!(idx[&0], (0..ds.num_transitions()).collect::<Vec<_>>());
    }

    #[test]
    fn unvisited_states_are_absent() {
        let (env, mu) = chain5(0.3);
        let opts = GenerateOptions { num_trajectories: 1, max_len: 1, seed: 0, ..Default::default() };
        let ds = generate(&env.mdp, &mu, &env.target, &opts).unwrap();
        let idx = ds.index_by_state();
        assert_eq!(idx.len(), 1);
        assert!(!idx.contains_key(&4));
    }

    #[test]
    fn restart_stream_resets_at_termination() {
        let (env, mu) = chain5(0.3);
        let stream = RestartStream::new(&env.mdp, &mu, &env.target, 4).unwrap();
        let recs: Vec<_> = stream.take(2000).collect();
        for w in recs.windows(2) {
            match w[0].next_state {
                None => {
                    assert_eq!(w[1].time, 0);
                    assert_eq!(w[1].rho_prod, 1.0);
                    assert_eq!(w[1].traj_id, w[0].traj_id + 1);
                }
                Some(sp) => {
                    assert_eq!(w[1].state, sp);
                    assert_eq!(w[1].time, w[0].time + 1);
                }
            }
        }
    }
}
