//! Estimators against exact oracle quantities, with Monte Carlo tolerances.

mod common;

use common::{gaussian_features, mean, neumann_occupancy, random_instance, std_error};
use dicelab::dataset::{generate, GenerateOptions, TrajectoryDataset};
use dicelab::envs::{self, BuiltinEnv};
use dicelab::estimators::{
    average_reward_baseline, cop_td, estimate_j, off_policy_td, tabular_average_dice, CopTdConfig, StepSchedule,
    TdConfig,
};
use dicelab::mdp::{build_chain, Policy};
use dicelab::oracle::{assemble_fixed_point, discounted_stationary, OracleReport};
use nalgebra::{DMatrix, DVector};

fn setup(spec: &str, gamma: f64, eps: f64) -> (BuiltinEnv, Policy, OracleReport) {
    let env = envs::parse_env(spec, gamma).unwrap();
    let mu = env.behaviour(eps, 1.0).unwrap();
    let oracle = OracleReport::compute(&env.mdp, &env.target, &mu).unwrap();
    (env, mu, oracle)
}

fn dataset(env: &BuiltinEnv, mu: &Policy, k: usize, seed: u64, max_len: usize) -> TrajectoryDataset {
    let opts = GenerateOptions { num_trajectories: k, seed, max_len, ..Default::default() };
    generate(&env.mdp, mu, &env.target, &opts).unwrap()
}

#[test]
fn true_ratio_reweighting_recovers_target_value() {
    for spec in ["chain:5", "loop:8"] {
        let (env, mu, oracle) = setup(spec, 0.9, 0.3);
        let estimates: Vec<f64> = (0..200)
            .map(|seed| estimate_j(&dataset(&env, &mu, 200, seed, 100_000), &oracle.density_ratio).unwrap())
            .collect();
        let (m, se) = (mean(&estimates), std_error(&estimates));
        assert!((m - oracle.j_pi).abs() < 4.0 * se + 1e-3, "{spec}: mean {m} vs {} (se {se})", oracle.j_pi);
    }
}

#[test]
fn average_reward_baseline_targets_behaviour_reward() {
    let (env, mu, oracle) = setup("gridworld:4x4", 0.95, 0.5);
    let r_mu = env.mdp.policy_reward(&mu);
    let truth: f64 = oracle.d_mu.iter().zip(&r_mu).map(|(d, r)| d * r).sum();
    let estimates: Vec<f64> =
        (0..100).map(|seed| average_reward_baseline(&dataset(&env, &mu, 100, seed, 100_000)).unwrap()).collect();
    let (m, se) = (mean(&estimates), std_error(&estimates));
    assert!((m - truth).abs() < 4.0 * se + 1e-4, "mean {m} vs {truth} (se {se})");
}

#[test]
fn tabular_mass_converges_to_target_mass() {
    let (env, mu, oracle) = setup("chain:13", 0.95, 0.3);
    let ds = dataset(&env, &mu, 20_000, 11, 100_000);
    let mass = tabular_average_dice(&ds, 0.95).unwrap().empirical_mass();
    let truth: f64 = oracle.d_pi_gamma.iter().sum();
    assert!((truth - (1.0 - oracle.gamma_mass_pi)).abs() < 1e-12);
    assert!((mass - truth).abs() < 0.02 * truth, "{mass} vs {truth}");
}

#[test]
fn tabular_error_shrinks_with_data() {
    let (env, mu, oracle) = setup("loop:8", 0.9, 0.3);
    let err = |k: usize| -> f64 {
        let errs: Vec<f64> = (0..5)
            .map(|seed| {
                let c = tabular_average_dice(&dataset(&env, &mu, k, seed, 100_000), 0.9).unwrap();
                c.c.iter().zip(&oracle.density_ratio).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .collect();
        mean(&errs)
    };
    let (small, large) = (err(100), err(10_000));
    assert!(large < small / 3.0, "{small} -> {large}");
}

#[test]
fn td_matches_oracle_values() {
    let (env, mu, oracle) = setup("chain:5", 0.9, 0.3);
    let ds = dataset(&env, &mu, 5_000, 3, 100_000);
    let cfg = TdConfig { schedule: StepSchedule::decaying(0.5, 0.6), epochs: 30, seed: 0 };
    let res = off_policy_td(&ds, env.mdp.initial_dist(), &env.target, 0.9, &cfg).unwrap();
    assert!((res.estimate.j_hat - oracle.j_pi).abs() < 0.01, "{} vs {}", res.estimate.j_hat, oracle.j_pi);
    assert!(res.estimate.ratio.is_empty());
    let visited = ds.index_by_state();
    for s in visited.keys() {
        for a in 0..env.mdp.num_actions() {
            assert!(
                (res.q[*s][a] - oracle.q_pi[*s][a]).abs() < 0.1,
                "Q({s},{a}) {} vs {}",
                res.q[*s][a],
                oracle.q_pi[*s][a]
            );
        }
    }
}

#[test]
fn on_policy_cop_td_approaches_true_ratio() {
    let env = envs::parse_env("chain:5", 0.9).unwrap();
    let oracle = OracleReport::compute(&env.mdp, &env.target, &env.target).unwrap();
    let opts = GenerateOptions { num_trajectories: 5_000, seed: 5, max_len: 100_000, ..Default::default() };
    let ds = generate(&env.mdp, &env.target, &env.target, &opts).unwrap();
    let cfg = CopTdConfig { schedule: StepSchedule::decaying(0.5, 0.6), epochs: 30, ..Default::default() };
    let fit = cop_td(&ds, env.mdp.initial_dist(), 0.9, &cfg).unwrap();
    for (s, (w, t)) in fit.estimate.ratio.iter().zip(&oracle.density_ratio).enumerate() {
        assert!((w - t).abs() < 0.1, "state {s}: {w} vs {t}");
    }
}

#[test]
fn discounted_stationary_matches_power_series() {
    for seed in 0..5 {
        let (mdp, target, _) = random_instance(6, 3, 0.05, 0.3, 0.8, seed);
        let chain = build_chain(&mdp, &target).unwrap();
        let series = neumann_occupancy(&chain.p_pi, mdp.initial_dist(), 0.8, 400);
        let exact = discounted_stationary(&mdp, &target).unwrap();
        for (a, b) in series.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn unregularised_fixed_point_is_weighted_least_squares() {
    let (mdp, target, behaviour) = random_instance(8, 2, 0.1, 0.3, 0.9, 42);
    let oracle = OracleReport::compute(&mdp, &target, &behaviour).unwrap();
    let phi = gaussian_features(8, 3, 1.0, 7);
    let lambda1 = 0.05;
    let sys =
        assemble_fixed_point(&phi, &oracle.d_mu, &oracle.density_ratio, oracle.expected_len_mu, 0.9, lambda1, 0.0, 1.0)
            .unwrap();

    let d = DMatrix::from_diagonal(&DVector::from_column_slice(&oracle.d_mu));
    let y = DVector::from_column_slice(&oracle.density_ratio) / (0.1 * oracle.expected_len_mu);
    let lhs = phi.transpose() * &d * &phi + DMatrix::identity(3, 3) * lambda1;
    let rhs = phi.transpose() * &d * y;
    let theta = lhs.lu().solve(&rhs).unwrap();
    assert!((sys.theta() - theta).amax() < 1e-10);
    assert_eq!(sys.eta(), 0.0);
}
