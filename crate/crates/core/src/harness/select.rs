use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sweep::AggregateRow;
use crate::error::{DiceError, Result};

/// The winning hyperparameter point and its error averaged over every data
/// point it was run on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPoint {
    pub estimator: String,
    pub label: String,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lr: Option<f64>,
    pub mean_sq_error: f64,
    pub rows: usize,
}

pub fn read_aggregate(path: impl AsRef<Path>) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows: std::result::Result<Vec<AggregateRow>, csv::Error> = r.deserialize().collect();
    Ok(rows?)
}

fn cmp_opt(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (a, b) => a.is_some().cmp(&b.is_some()),
    }
}

/// Point with the smallest mean final squared error across rows; ties go
/// to the smaller lr, then λ1, then λ2. Points with any failed or
/// non-finite row rank last.
pub fn select_best(rows: &[AggregateRow]) -> Result<SelectedPoint> {
    let mut groups: BTreeMap<&str, Vec<&AggregateRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.label.as_str()).or_default().push(r);
    }
    let candidates: Vec<SelectedPoint> = groups
        .into_values()
        .map(|rs| {
            let errs: Vec<f64> = rs.iter().map(|r| r.mean_final_sq_error).collect();
            let mean = if errs.iter().all(|e| e.is_finite()) {
                errs.iter().sum::<f64>() / errs.len() as f64
            } else {
                f64::INFINITY
            };
            let r = rs[0];
            SelectedPoint {
                estimator: r.estimator.clone(),
                label: r.label.clone(),
                lambda1: r.lambda1,
                lambda2: r.lambda2,
                lr: r.lr,
                mean_sq_error: mean,
                rows: rs.len(),
            }
        })
        .collect();
    candidates
        .into_iter()
        .min_by(|a, b| {
            a.mean_sq_error
                .total_cmp(&b.mean_sq_error)
                .then(cmp_opt(a.lr, b.lr))
                .then(cmp_opt(a.lambda1, b.lambda1))
                .then(cmp_opt(a.lambda2, b.lambda2))
                .then(a.label.cmp(&b.label))
        })
        .ok_or_else(|| DiceError::input("no aggregate rows to select from"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: &str, env: &str, err: f64, lr: f64, l1: f64, l2: f64) -> AggregateRow {
        AggregateRow {
            point: 0,
            env: env.into(),
            gamma: 0.95,
            num_traj: 40,
            max_len: 100,
            behaviour_eps: 0.3,
            var_scale: 1.0,
            estimator: "avg-dice-linear".into(),
            label: label.into(),
            lambda1: Some(l1),
            lambda2: Some(l2),
            lr: Some(lr),
            seeds: 10,
            failed: 0,
            j_true: 0.5,
            mean_j_hat: 0.5,
            mean_final_sq_error: err,
            stderr_final_sq_error: 0.0,
            mean_max_ratio_error: None,
        }
    }

    #[test]
    fn single_row() {
        let best = select_best(&[row("a", "chain:5", 0.3, 1e-3, 0.0, 0.5)]).unwrap();
        assert_eq!(best.label, "a");
        assert_eq!(best.mean_sq_error, 0.3);
    }

    #[test]
    fn ties_prefer_smaller_lr_then_lambdas() {
        let rows = [
            row("a", "e", 0.1, 1e-3, 0.0, 0.5),
            row("b", "e", 0.1, 1e-4, 0.1, 0.5),
            row("c", "e", 0.1, 1e-4, 0.01, 2.0),
            row("d", "e", 0.1, 1e-4, 0.01, 0.5),
        ];
        assert_eq!(select_best(&rows).unwrap().label, "d");
    }

    #[test]
    fn averages_across_environments() {
        let rows = [
            row("a", "e1", 0.0, 1e-3, 0.0, 0.5),
            row("a", "e2", 1.0, 1e-3, 0.0, 0.5),
            row("b", "e1", 0.4, 1e-3, 0.0, 0.5),
            row("b", "e2", 0.4, 1e-3, 0.0, 0.5),
            row("c", "e1", f64::NAN, 1e-5, 0.0, 0.5),
            row("c", "e2", 0.0, 1e-5, 0.0, 0.5),
        ];
        let best = select_best(&rows).unwrap();
        assert_eq!(best.label, "b");
        assert_eq!(best.rows, 2);
        assert!(select_best(&[]).is_err());
    }
}
