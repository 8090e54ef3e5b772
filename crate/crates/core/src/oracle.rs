//! Exact ground truth by dense linear algebra.
//!
//! Conventions:
//! - `d_pi_gamma` is the discounted occupancy `(1-γ) Σ_j γ^j P_π(S_j = s)`.
//!   In episodic tasks its total mass is `1 - E_π[γ^T]`, not 1.
//! - `d_mu` is the stationary distribution of the behaviour restart chain
//!   (termination redirected to the initial distribution) over the
//!   non-terminal states only; it sums to 1.
//!
//! All solves use LU with partial pivoting; the matrices are a few hundred
//! rows at most.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{DiceError, Result};
use crate::mdp::{build_chain, MarkovChain, Policy, TabularMdp};

/// Threshold below which `d_pi_gamma` is treated as zero when checking
/// that the behaviour distribution covers the target one.
pub const SUPPORT_TOL: f64 = 1e-12;

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

fn solve(a: DMatrix<f64>, b: DVector<f64>, what: &str) -> Result<DVector<f64>> {
    a.lu().solve(&b).ok_or_else(|| DiceError::model(format!("{what}: linear system is singular")))
}

/// Positive-probability successor lists of a square matrix.
fn adjacency(m: &[Vec<f64>]) -> Vec<Vec<usize>> {
    m.iter().map(|row| row.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(j, _)| j).collect()).collect()
}

fn reachable_from(adj: &[Vec<usize>], sources: impl IntoIterator<Item = usize>) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack: Vec<usize> = sources.into_iter().collect();
    for &s in &stack {
        seen[s] = true;
    }
    while let Some(s) = stack.pop() {
        for &t in &adj[s] {
            if !seen[t] {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    seen
}

/// Strongly connected components (Kosaraju). Component ids are arbitrary
/// but deterministic.
pub(crate) fn strongly_connected_components(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    for root in 0..n {
        if visited[root] {
            continue;
        }
        visited[root] = true;
        let mut stack = vec![(root, 0usize)];
        while let Some((v, i)) = stack.pop() {
            if i < adj[v].len() {
                stack.push((v, i + 1));
                let w = adj[v][i];
                if !visited[w] {
                    visited[w] = true;
                    stack.push((w, 0));
                }
            } else {
                order.push(v);
            }
        }
    }
    let mut rev = vec![Vec::new(); n];
    for (v, succ) in adj.iter().enumerate() {
        for &w in succ {
            rev[w].push(v);
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for &root in order.iter().rev() {
        if comp[root] != usize::MAX {
            continue;
        }
        comp[root] = next;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for &w in &rev[v] {
                if comp[w] == usize::MAX {
                    comp[w] = next;
                    stack.push(w);
                }
            }
        }
        next += 1;
    }
    comp
}

/// `(1-γ)(I - γ P_πᵀ)⁻¹ ν`.
pub fn discounted_stationary(mdp: &TabularMdp, policy: &Policy) -> Result<Vec<f64>> {
    let chain = build_chain(mdp, policy)?;
    let gamma = mdp.discount();
    let n = mdp.num_states();
    let p = to_matrix(&chain.p_pi);
    let a = DMatrix::identity(n, n) - p.transpose() * gamma;
    let b = DVector::from_column_slice(mdp.initial_dist()) * (1.0 - gamma);
    Ok(solve(a, b, "discounted stationary distribution")?.iter().copied().collect())
}

/// Stationary distribution of a row-stochastic matrix with a single closed
/// communicating class. States outside that class get zero mass.
pub fn stationary_of(matrix: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = matrix.len();
    let adj = adjacency(matrix);
    let comp = strongly_connected_components(&adj);
    let ncomp = comp.iter().max().map_or(0, |m| m + 1);
    let mut closed = vec![true; ncomp];
    for (v, succ) in adj.iter().enumerate() {
        if succ.iter().any(|&w| comp[w] != comp[v]) {
            closed[comp[v]] = false;
        }
    }
    let classes: Vec<Vec<usize>> =
        (0..ncomp).filter(|&c| closed[c]).map(|c| (0..n).filter(|&v| comp[v] == c).collect()).collect();
    if classes.len() != 1 {
        return Err(DiceError::model(format!("restart chain is reducible: closed classes {classes:?}")));
    }
    let class = &classes[0];
    let m = class.len();
    // dᵀ(R_C - I) = 0 with the last equation replaced by Σ d = 1
    let mut a = DMatrix::from_fn(m, m, |i, j| matrix[class[j]][class[i]] - if i == j { 1.0 } else { 0.0 });
    let mut b = DVector::zeros(m);
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    b[m - 1] = 1.0;
    let sol = solve(a, b, "undiscounted stationary distribution")?;
    let mut d = vec![0.0; n];
    for (k, &s) in class.iter().enumerate() {
        d[s] = sol[k].max(0.0);
    }
    Ok(d)
}

pub fn undiscounted_stationary(mdp: &TabularMdp, policy: &Policy) -> Result<Vec<f64>> {
    let chain = build_chain(mdp, policy)?;
    stationary_of(&chain.restart_chain)
}

/// Mean return time to `s` in a row-stochastic chain, from the hitting-time
/// system `m(x) = 1 + Σ_{y≠s} R(x,y) m(y)`.
pub fn expected_recurrence_time(matrix: &[Vec<f64>], s: usize) -> Result<f64> {
    let n = matrix.len();
    let others: Vec<usize> = (0..n).filter(|&x| x != s).collect();
    let m = others.len();
    let hit = if m == 0 {
        DVector::zeros(0)
    } else {
        let a = DMatrix::from_fn(m, m, |i, j| (if i == j { 1.0 } else { 0.0 }) - matrix[others[i]][others[j]]);
        solve(a, DVector::from_element(m, 1.0), "hitting times")?
    };
    Ok(1.0 + others.iter().enumerate().map(|(k, &y)| matrix[s][y] * hit[k]).sum::<f64>())
}

/// `E_policy[T]`: mean trajectory length. Fails when some state reachable
/// from ν cannot reach termination.
pub fn expected_len(mdp: &TabularMdp, policy: &Policy) -> Result<f64> {
    let chain = build_chain(mdp, policy)?;
    expected_len_of(&chain, mdp.initial_dist())
}

fn expected_len_of(chain: &MarkovChain, nu: &[f64]) -> Result<f64> {
    let n = chain.num_states();
    let adj = adjacency(&chain.p_pi);
    let reach = reachable_from(&adj, (0..n).filter(|&s| nu[s] > 0.0));
    let mut rev = vec![Vec::new(); n];
    for (v, succ) in adj.iter().enumerate() {
        for &w in succ {
            rev[w].push(v);
        }
    }
    let can_end = reachable_from(&rev, (0..n).filter(|&s| chain.term_prob[s] > 0.0));
    let stuck: Vec<usize> = (0..n).filter(|&s| reach[s] && !can_end[s]).collect();
    if !stuck.is_empty() {
        return Err(DiceError::model(format!(
            "expected trajectory length is infinite: states {stuck:?} are reachable but never terminate"
        )));
    }
    let live: Vec<usize> = (0..n).filter(|&s| reach[s]).collect();
    let m = live.len();
    let a = DMatrix::from_fn(m, m, |i, j| (if i == j { 1.0 } else { 0.0 }) - chain.p_pi[live[i]][live[j]]);
    let h = solve(a, DVector::from_element(m, 1.0), "expected trajectory length")?;
    Ok(live.iter().enumerate().map(|(k, &s)| nu[s] * h[k]).sum())
}

/// `E_policy[γ^T]` from `z = γ (term + P z)`.
pub fn gamma_mass(mdp: &TabularMdp, policy: &Policy) -> Result<f64> {
    let chain = build_chain(mdp, policy)?;
    let n = mdp.num_states();
    let gamma = mdp.discount();
    let a = DMatrix::identity(n, n) - to_matrix(&chain.p_pi) * gamma;
    let b = DVector::from_column_slice(&chain.term_prob) * gamma;
    let z = solve(a, b, "discounted termination mass")?;
    Ok(mdp.initial_dist().iter().zip(z.iter()).map(|(v, z)| v * z).sum())
}

/// `(E[T], E[γ^T])` under the same policy.
pub fn expected_quantities(mdp: &TabularMdp, policy: &Policy) -> Result<(f64, f64)> {
    Ok((expected_len(mdp, policy)?, gamma_mass(mdp, policy)?))
}

fn state_values(mdp: &TabularMdp, policy: &Policy) -> Result<DVector<f64>> {
    let chain = build_chain(mdp, policy)?;
    let n = mdp.num_states();
    let a = DMatrix::identity(n, n) - to_matrix(&chain.p_pi) * mdp.discount();
    let r = DVector::from_vec(mdp.policy_reward(policy));
    solve(a, r, "state values")
}

/// Action values `q(s,a) = r(s,a) + γ Σ_s' P(s'|s,a) v(s')`, with `v` the
/// exact state values of `policy` and zero value at termination.
pub fn q_values(mdp: &TabularMdp, policy: &Policy) -> Result<Vec<Vec<f64>>> {
    let v = state_values(mdp, policy)?;
    let gamma = mdp.discount();
    Ok((0..mdp.num_states())
        .map(|s| {
            (0..mdp.num_actions())
                .map(|a| {
                    let next: f64 = mdp.transition(s, a).iter().zip(v.iter()).map(|(p, v)| p * v).sum();
                    mdp.reward(s, a) + gamma * next
                })
                .collect()
        })
        .collect())
}

/// `Σ_s d_{π,γ}(s) r_π(s)`.
pub fn j_pi(mdp: &TabularMdp, policy: &Policy) -> Result<f64> {
    let d = discounted_stationary(mdp, policy)?;
    Ok(d.iter().zip(mdp.policy_reward(policy)).map(|(d, r)| d * r).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub d_pi_gamma: Vec<f64>,
    pub d_mu: Vec<f64>,
    /// `d_pi_gamma / d_mu`, zero where `d_mu` is zero.
    pub density_ratio: Vec<f64>,
    pub j_pi: f64,
    pub expected_len_mu: f64,
    pub gamma_mass_pi: f64,
    pub q_pi: Vec<Vec<f64>>,
}

impl OracleReport {
    /// Ground truth for evaluating `target` from data logged by `behaviour`.
    /// Fails if the behaviour restart chain does not cover every state the
    /// target visits.
    pub fn compute(mdp: &TabularMdp, target: &Policy, behaviour: &Policy) -> Result<Self> {
        let d_pi_gamma = discounted_stationary(mdp, target)?;
        let d_mu = undiscounted_stationary(mdp, behaviour)?;
        let uncovered: Vec<usize> =
            (0..mdp.num_states()).filter(|&s| d_pi_gamma[s] > SUPPORT_TOL && d_mu[s] <= 0.0).collect();
        if !uncovered.is_empty() {
            return Err(DiceError::model(format!(
                "behaviour never visits states {uncovered:?} that the target visits"
            )));
        }
        let density_ratio = d_pi_gamma.iter().zip(&d_mu).map(|(&p, &m)| if m > 0.0 { p / m } else { 0.0 }).collect();
        Ok(OracleReport {
            j_pi: j_pi(mdp, target)?,
            expected_len_mu: expected_len(mdp, behaviour)?,
            gamma_mass_pi: gamma_mass(mdp, target)?,
            q_pi: q_values(mdp, target)?,
            d_pi_gamma,
            d_mu,
            density_ratio,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Closed-form fixed point of the incremental linear ratio update:
/// `G x + g = 0` with `x = (θ, η)`.
#[derive(Debug, Clone)]
pub struct FixedPointSystem {
    pub g_matrix: DMatrix<f64>,
    pub g_vector: DVector<f64>,
    /// `-G⁻¹ g`. When `lambda2 == 0` the η row of `G` vanishes, η never
    /// moves from its initial value, and the solution holds η = 0.
    pub solution: DVector<f64>,
    pub features: DMatrix<f64>,
    pub h: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub feature_rank: usize,
}

impl FixedPointSystem {
    pub fn theta(&self) -> DVector<f64> {
        let d = self.features.ncols();
        self.solution.rows(0, d).into_owned()
    }

    pub fn eta(&self) -> f64 {
        self.solution[self.features.ncols()]
    }
}

/// Numerical rank with singular values below `tol * σ_max` treated as zero.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|&&s| s > tol * top.max(f64::MIN_POSITIVE)).count()
}

pub const RANK_TOL: f64 = 1e-10;

#[allow(clippy::too_many_arguments)]
pub fn assemble_fixed_point(
    features: &DMatrix<f64>,
    d_mu: &[f64],
    density_ratio: &[f64],
    expected_len_mu: f64,
    gamma: f64,
    lambda1: f64,
    lambda2: f64,
    h: f64,
) -> Result<FixedPointSystem> {
    let ns = features.nrows();
    let d = features.ncols();
    if d_mu.len() != ns || density_ratio.len() != ns {
        return Err(DiceError::input(format!(
            "features have {ns} rows but d_mu/ratio have {}/{} entries",
            d_mu.len(),
            density_ratio.len()
        )));
    }
    if lambda1 < 0.0 || lambda2 < 0.0 || expected_len_mu.is_nan() || expected_len_mu <= 0.0 || h.is_nan() || h <= 0.0 {
        return Err(DiceError::input("lambdas must be >= 0 and E[T], H must be > 0"));
    }
    let rank = numerical_rank(features, RANK_TOL);
    let dmu = DVector::from_column_slice(d_mu);
    let weighted = DMatrix::from_fn(ns, d, |i, j| d_mu[i] * features[(i, j)]);
    let gram = features.transpose() * &weighted;
    let phi_d = features.transpose() * &dmu;
    let coupling = lambda2 * h * (1.0 - gamma);
    let scale = 1.0 / ((1.0 - gamma) * expected_len_mu);
    let y = DVector::from_column_slice(density_ratio);

    let mut gm = DMatrix::zeros(d + 1, d + 1);
    gm.view_mut((0, 0), (d, d)).copy_from(&(-&gram - DMatrix::identity(d, d) * lambda1));
    gm.view_mut((0, d), (d, 1)).copy_from(&(-&phi_d * coupling));
    gm.view_mut((d, 0), (1, d)).copy_from(&(phi_d.transpose() * coupling));
    gm[(d, d)] = -lambda2;

    let mut gv = DVector::zeros(d + 1);
    gv.rows_mut(0, d).copy_from(&(weighted.transpose() * &y * scale));
    gv[d] = -lambda2;

    let singular = |message: String| DiceError::Singular {
        message,
        eigenvalues: gm.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect(),
    };
    if rank < d && lambda1 == 0.0 {
        return Err(singular(format!("features have rank {rank} < {d} and lambda1 = 0")));
    }
    let solution = if lambda2 == 0.0 {
        let top = gm.view((0, 0), (d, d)).into_owned();
        let rhs = -gv.rows(0, d).into_owned();
        let theta = top.lu().solve(&rhs).ok_or_else(|| singular("parameter block is singular".into()))?;
        let mut x = DVector::zeros(d + 1);
        x.rows_mut(0, d).copy_from(&theta);
        x
    } else {
        gm.clone().lu().solve(&(-&gv)).ok_or_else(|| singular("G is singular".into()))?
    };
    Ok(FixedPointSystem {
        g_matrix: gm,
        g_vector: gv,
        solution,
        features: features.clone(),
        h,
        lambda1,
        lambda2,
        feature_rank: rank,
    })
}

#[derive(Debug, Clone)]
pub struct HurwitzCheck {
    pub stable: bool,
    pub eigenvalues: Vec<Complex<f64>>,
    pub max_real_part: f64,
}

pub const HURWITZ_MARGIN: f64 = 1e-12;

/// Whether every eigenvalue of `g` has real part below `-1e-12`.
pub fn check_hurwitz(g: &DMatrix<f64>) -> Result<HurwitzCheck> {
    if !g.is_square() {
        return Err(DiceError::input("Hurwitz check needs a square matrix"));
    }
    let eigenvalues: Vec<Complex<f64>> = g.complex_eigenvalues().iter().copied().collect();
    let max_real_part = eigenvalues.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(HurwitzCheck { stable: max_real_part < -HURWITZ_MARGIN, eigenvalues, max_real_part })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;

    fn one_state(termination: f64, reward: f64, gamma: f64) -> TabularMdp {
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

    fn two_step(gamma: f64) -> TabularMdp {
        // s0 -> s1 -> terminate, deterministically
        TabularMdp::new(
            2,
            1,
            vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 0.0]]],
            vec![vec![0.0], vec![1.0]],
            vec![vec![1.0], vec![2.0]],
            vec![1.0, 0.0],
            gamma,
        )
        .unwrap()
    }

    #[test]
    fn discounted_stationary_small_cases() {
        let pol = Policy::uniform(1, 1);
        assert!((discounted_stationary(&one_state(0.0, 1.0, 0.7), &pol).unwrap()[0] - 1.0).abs() < 1e-12);
        assert!((discounted_stationary(&one_state(1.0, 1.0, 0.5), &pol).unwrap()[0] - 0.5).abs() < 1e-12);
        let d = discounted_stationary(&two_step(0.9), &Policy::uniform(2, 1)).unwrap();
        // only trajectory: s0 at j=0, s1 at j=1
        let brute = [(1.0 - 0.9) * 1.0, (1.0 - 0.9) * 0.9];
        assert!((d[0] - brute[0]).abs() < 1e-12 && (d[1] - brute[1]).abs() < 1e-12);
    }

    #[test]
    fn undiscounted_stationary_small_cases() {
        let d = undiscounted_stationary(&one_state(0.0, 0.0, 0.9), &Policy::uniform(1, 1)).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-12);
        // s0 -> s1 -> restart at s0 is a deterministic 2-cycle
        let d = undiscounted_stationary(&two_step(0.9), &Policy::uniform(2, 1)).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-12 && (d[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reducible_restart_chain_is_rejected() {
        // two disjoint self-loops, starting in either
        let mdp = TabularMdp::new(
            2,
            1,
            vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]],
            vec![vec![0.0], vec![0.0]],
            vec![vec![0.0], vec![0.0]],
            vec![0.5, 0.5],
            0.9,
        )
        .unwrap();
        let err = undiscounted_stationary(&mdp, &Policy::uniform(2, 1)).unwrap_err();
        assert!(matches!(err, DiceError::Model(ref m) if m.contains("[0]") && m.contains("[1]")), "{err}");
        assert!(expected_len(&mdp, &Policy::uniform(2, 1)).is_err());
    }

    #[test]
    fn expected_quantities_small_cases() {
        let (len, mass) = expected_quantities(&one_state(1.0, 0.0, 0.6), &Policy::uniform(1, 1)).unwrap();
        assert!((len - 1.0).abs() < 1e-12 && (mass - 0.6).abs() < 1e-12);
        let (len, _) = expected_quantities(&one_state(0.25, 0.0, 0.6), &Policy::uniform(1, 1)).unwrap();
        assert!((len - 4.0).abs() < 1e-12);
    }

    #[test]
    fn q_values_small_cases() {
        let zero = one_state(0.3, 0.0, 0.9);
        assert_eq!(q_values(&zero, &Policy::uniform(1, 1)).unwrap(), vec![vec![0.0]]);
        assert_eq!(j_pi(&zero, &Policy::uniform(1, 1)).unwrap(), 0.0);
        let forever = one_state(0.0, 1.0, 0.9);
        assert!((q_values(&forever, &Policy::uniform(1, 1)).unwrap()[0][0] - 10.0).abs() < 1e-9);
        assert!((j_pi(&forever, &Policy::uniform(1, 1)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn j_pi_matches_initial_q_on_chain3() {
        let env = envs::parse_env("chain:3", 0.9).unwrap();
        let q = q_values(&env.mdp, &env.target).unwrap();
        let nu = env.mdp.initial_dist();
        let via_q: f64 =
            (0..3).map(|s| nu[s] * (0..2).map(|a| env.target.prob(s, a) * q[s][a]).sum::<f64>()).sum::<f64>()
                * (1.0 - 0.9);
        assert!((via_q - j_pi(&env.mdp, &env.target).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn report_mass_invariants() {
        for spec in envs::SUITE {
            let env = envs::parse_env(spec, 0.95).unwrap();
            let mu = env.behaviour(0.3, 1.0).unwrap();
            let r = OracleReport::compute(&env.mdp, &env.target, &mu).unwrap();
            let mass: f64 = r.d_pi_gamma.iter().sum();
            assert!((mass - (1.0 - r.gamma_mass_pi)).abs() < 1e-9, "{spec}");
            assert!((r.d_mu.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(r.d_pi_gamma.iter().all(|&x| x >= 0.0));
            assert!(r.expected_len_mu >= 1.0);
            let back = OracleReport::from_json(&r.to_json().unwrap()).unwrap();
            assert_eq!(back, r);
        }
    }

    #[test]
    fn uncovered_target_states_are_rejected() {
        // behaviour always terminates at s0 so never reaches s1; target goes on
        let mdp = TabularMdp::new(
            2,
            2,
            vec![vec![vec![0.0, 1.0], vec![0.0, 0.0]], vec![vec![0.0, 0.0], vec![0.0, 0.0]]],
            vec![vec![0.0, 1.0], vec![1.0, 1.0]],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![1.0, 0.0],
            0.9,
        )
        .unwrap();
        let target = Policy::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let behaviour = Policy::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(OracleReport::compute(&mdp, &target, &behaviour).is_err());
    }

    #[test]
    fn one_hot_unregularised_fixed_point_is_scaled_ratio() {
        let d_mu = [0.2, 0.5, 0.3];
        let ratio = [1.5, 0.4, 1.2];
        let phi = DMatrix::identity(3, 3);
        let sys = assemble_fixed_point(&phi, &d_mu, &ratio, 4.0, 0.9, 0.0, 0.0, 4.0).unwrap();
        for (s, r) in ratio.iter().enumerate() {
            assert!((sys.theta()[s] - r / (0.1 * 4.0)).abs() < 1e-12);
        }
        assert_eq!(sys.eta(), 0.0);
    }

    #[test]
    fn rank_deficient_unregularised_is_singular() {
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let err = assemble_fixed_point(&phi, &[0.3, 0.3, 0.4], &[1.0; 3], 2.0, 0.9, 0.0, 0.0, 2.0).unwrap_err();
        assert!(matches!(err, DiceError::Singular { .. }));
        let ok = assemble_fixed_point(&phi, &[0.3, 0.3, 0.4], &[1.0; 3], 2.0, 0.9, 0.01, 0.5, 2.0).unwrap();
        assert_eq!(ok.feature_rank, 1);
    }

    #[test]
    fn hurwitz_examples() {
        let neg = DMatrix::<f64>::identity(3, 3) * -1.0;
        assert!(check_hurwitz(&neg).unwrap().stable);
        let mut z = neg.clone();
        z[(2, 2)] = 0.0;
        assert!(!check_hurwitz(&z).unwrap().stable);
        assert!(check_hurwitz(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn recurrence_times_of_two_cycle() {
        let m = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert!((expected_recurrence_time(&m, 0).unwrap() - 2.0).abs() < 1e-12);
    }
}
