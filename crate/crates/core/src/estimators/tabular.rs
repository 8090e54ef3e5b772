//! Counting form of Average-DICE.
//!
//! For every visited state the correction is `(n/K)(1-γ)` times the mean of
//! `γ^time · ρ_prod` over the dataset occurrences of that state.

use serde::{Deserialize, Serialize};

use super::{estimate_j, regression_target, RatioEstimate};
use crate::dataset::TrajectoryDataset;
use crate::error::{DiceError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularCorrection {
    /// `|I_s|`
    pub count: Vec<usize>,
    /// `Σ_{t ∈ I_s} γ^{time_t} ρ_prod,t`
    pub weighted_sum: Vec<f64>,
    /// Per-state correction; 0 for unvisited states.
    pub c: Vec<f64>,
    pub n: usize,
    /// Completed trajectories.
    pub k: usize,
    pub gamma: f64,
}

pub fn tabular_average_dice(dataset: &TrajectoryDataset, gamma: f64) -> Result<TabularCorrection> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(DiceError::input(format!("gamma {gamma} not in (0, 1)")));
    }
    let k = dataset.completed_trajectories();
    if k == 0 {
        return Err(DiceError::input("tabular Average-DICE needs at least one completed trajectory"));
    }
    let ns = dataset.num_states();
    let n = dataset.num_transitions();
    let mut count = vec![0usize; ns];
    let mut weighted_sum = vec![0.0; ns];
    for r in dataset.records() {
        count[r.state] += 1;
        weighted_sum[r.state] += regression_target(gamma, r.time, r.rho_prod);
    }
    let scale = n as f64 / k as f64 * (1.0 - gamma);
    let c = count
        .iter()
        .zip(&weighted_sum)
        .map(|(&cnt, &ws)| if cnt == 0 { 0.0 } else { scale * ws / cnt as f64 })
        .collect();
    Ok(TabularCorrection { count, weighted_sum, c, n, k, gamma })
}

impl TabularCorrection {
    pub fn unvisited(&self) -> Vec<usize> {
        (0..self.count.len()).filter(|&s| self.count[s] == 0).collect()
    }

    /// `(1-γ)/K · Σ_{t ∈ I_s} γ^time ρ_prod`: the unbiased estimate of the
    /// discounted target occupancy of each state.
    pub fn discounted_occupancy(&self) -> Vec<f64> {
        let w = (1.0 - self.gamma) / self.k as f64;
        self.weighted_sum.iter().map(|ws| w * ws).collect()
    }

    /// `Σ_s d̂(s) c(s) f(s)`.
    pub fn reweighted_mean(&self, f: &[f64]) -> f64 {
        let n = self.n as f64;
        self.count.iter().zip(&self.c).zip(f).map(|((&cnt, &c), &fx)| cnt as f64 / n * c * fx).sum()
    }

    /// `Σ_s d̂(s) c(s)`.
    pub fn empirical_mass(&self) -> f64 {
        self.reweighted_mean(&vec![1.0; self.c.len()])
    }

    pub fn to_estimate(&self, dataset: &TrajectoryDataset) -> Result<RatioEstimate> {
        let mut diagnostics = std::collections::BTreeMap::new();
        diagnostics.insert("mass".to_string(), self.empirical_mass());
        diagnostics.insert("n".to_string(), self.n as f64);
        diagnostics.insert("k".to_string(), self.k as f64);
        diagnostics.insert("unvisited_states".to_string(), self.unvisited().len() as f64);
        Ok(RatioEstimate { ratio: self.c.clone(), j_hat: estimate_j(dataset, &self.c)?, diagnostics })
    }
}
