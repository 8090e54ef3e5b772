use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sweep::{std_error, RunResult};
use crate::error::Result;

/// Squared errors below this are clamped before taking log10.
pub const MIN_SQ_ERROR: f64 = 1e-300;

/// Long-format row: mean over seeds of `log10(squared error)` at one
/// logged step of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub point: usize,
    pub env: String,
    pub estimator: String,
    pub step: u64,
    pub mean_log10_mse: f64,
    pub stderr: f64,
    pub seeds: usize,
}

/// Seeds are pooled per (point, step); a step logged by only some seeds
/// averages over those.
pub fn plot_rows(runs: &[RunResult]) -> Vec<PlotRow> {
    let mut cells: BTreeMap<(usize, u64), Vec<f64>> = BTreeMap::new();
    let mut labels: BTreeMap<usize, (String, String)> = BTreeMap::new();
    for r in runs.iter().filter(|r| r.ok()) {
        labels.entry(r.point.id).or_insert_with(|| (r.point.data.env.clone(), r.point.estimator.label()));
        for s in &r.series {
            cells.entry((r.point.id, s.step)).or_default().push(s.squared_error.max(MIN_SQ_ERROR).log10());
        }
    }
    cells
        .into_iter()
        .map(|((point, step), logs)| {
            let (env, estimator) = labels[&point].clone();
            PlotRow {
                point,
                env,
                estimator,
                step,
                mean_log10_mse: logs.iter().sum::<f64>() / logs.len() as f64,
                stderr: std_error(&logs),
                seeds: logs.len(),
            }
        })
        .collect()
}

pub fn emit_plot_data(runs: &[RunResult], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let rows = plot_rows(runs);
    if rows.is_empty() {
        w.write_record(["point", "env", "estimator", "step", "mean_log10_mse", "stderr", "seeds"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
