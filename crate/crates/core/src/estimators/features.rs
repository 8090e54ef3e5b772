//! State feature matrices (one row per state).

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{DiceError, Result};
use crate::rng::aux_rng;

pub fn one_hot(num_states: usize) -> DMatrix<f64> {
    DMatrix::identity(num_states, num_states)
}

/// Standard-normal entries (Box-Muller over ChaCha8), deterministic in `seed`.
pub fn random_gaussian(num_states: usize, dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = aux_rng(seed, 2);
    let mut normal = move || {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    // filled row by row so the matrix for a given seed does not depend on
    // nalgebra's storage order
    let mut m = DMatrix::zeros(num_states, dim);
    for i in 0..num_states {
        for j in 0..dim {
            m[(i, j)] = normal();
        }
    }
    m
}

/// Parse `onehot` or `random:D`.
pub fn from_spec(spec: &str, num_states: usize, seed: u64) -> Result<DMatrix<f64>> {
    if spec == "onehot" {
        return Ok(one_hot(num_states));
    }
    if let Some(d) = spec.strip_prefix("random:") {
        let dim: usize = d
            .parse()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| DiceError::input(format!("bad feature dimension in '{spec}'")))?;
        return Ok(random_gaussian(num_states, dim, seed));
    }
    Err(DiceError::input(format!("unknown feature spec '{spec}'")))
}

/// Largest row norm: the feature bound L.
pub fn max_row_norm(features: &DMatrix<f64>) -> f64 {
    features.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}
