use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataPoint, ExperimentConfig};
use super::{max_ratio_error, plotdata, run_estimator, select, EstimatorSpec, EvalContext};
use crate::dataset::{generate, GenerateOptions};
use crate::envs;
use crate::error::{DiceError, Result};
use crate::oracle::OracleReport;

/// A data point paired with one concrete estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub id: usize,
    pub data: DataPoint,
    pub estimator: EstimatorSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub step: u64,
    pub j_hat: f64,
    pub squared_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub point: SweepPoint,
    pub seed: u64,
    #[serde(with = "nan_as_null")]
    pub j_true: f64,
    pub series: Vec<SeriesPoint>,
    #[serde(with = "nan_as_null")]
    pub final_j_hat: f64,
    #[serde(with = "nan_as_null")]
    pub final_squared_error: f64,
    pub max_ratio_error: Option<f64>,
    /// Kept out of the serialized form so saved results are reproducible.
    #[serde(skip)]
    pub wall_seconds: f64,
    /// `None` on success.
    pub error: Option<String>,
}

impl RunResult {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

pub fn write_results(runs: &[RunResult], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for r in runs {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<RunResult>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| DiceError::Parse { line: i + 1, message: e.to_string() }))
        .collect()
}

/// One aggregate CSV row: a sweep point summarised over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub point: usize,
    pub env: String,
    pub gamma: f64,
    pub num_traj: usize,
    pub max_len: usize,
    pub behaviour_eps: f64,
    pub var_scale: f64,
    pub estimator: String,
    pub label: String,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lr: Option<f64>,
    pub seeds: usize,
    pub failed: usize,
    pub j_true: f64,
    pub mean_j_hat: f64,
    pub mean_final_sq_error: f64,
    pub stderr_final_sq_error: f64,
    pub mean_max_ratio_error: Option<f64>,
}

pub struct SweepOutput {
    pub runs: Vec<RunResult>,
    pub aggregate: Vec<AggregateRow>,
}

/// Pool size from `DICELAB_THREADS`, else the available parallelism.
pub fn worker_threads() -> Result<usize> {
    match std::env::var("DICELAB_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| DiceError::input(format!("DICELAB_THREADS must be a positive integer, got '{v}'"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn sweep_points(config: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    let specs = config.estimator_specs();
    let mut out = Vec::new();
    for data in config.data_points()? {
        for spec in &specs {
            out.push(SweepPoint { id: out.len(), data: data.clone(), estimator: spec.clone() });
        }
    }
    Ok(out)
}

fn execute(point: &SweepPoint, seed: u64, config: &ExperimentConfig) -> Result<RunResult> {
    let d = &point.data;
    let env = envs::parse_env(&d.env, d.gamma)?;
    let behaviour = env.behaviour(d.behaviour_eps, d.var_scale)?;
    let oracle = OracleReport::compute(&env.mdp, &env.target, &behaviour)?;
    let opts =
        GenerateOptions { num_trajectories: d.num_traj, max_len: d.max_len, seed, truncation: config.truncation };
    let mut dataset = generate(&env.mdp, &behaviour, &env.target, &opts)?;
    dataset.header.env = Some(d.env.clone());
    dataset.header.behaviour_eps = Some(d.behaviour_eps);
    dataset.header.var_scale = Some(d.var_scale);
    let ctx = EvalContext {
        initial_dist: Some(env.mdp.initial_dist()),
        target: Some(&env.target),
        gamma: d.gamma,
        oracle: Some(&oracle),
        seed,
    };
    let trace = run_estimator(&point.estimator, &dataset, &ctx)?;
    let j_true = oracle.j_pi;
    let series = trace
        .curve
        .iter()
        .map(|c| SeriesPoint { step: c.step, j_hat: c.j_hat, squared_error: (c.j_hat - j_true).powi(2) })
        .collect();
    let j = trace.estimate.j_hat;
    Ok(RunResult {
        point: point.clone(),
        seed,
        j_true,
        series,
        final_j_hat: j,
        final_squared_error: (j - j_true).powi(2),
        max_ratio_error: max_ratio_error(&trace.estimate.ratio, &oracle),
        wall_seconds: 0.0,
        error: None,
    })
}

fn run_one(point: &SweepPoint, seed: u64, config: &ExperimentConfig) -> RunResult {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| execute(point, seed, config)));
    let mut run = match outcome {
        Ok(Ok(run)) => run,
        Ok(Err(e)) => failed(point, seed, e.to_string()),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            failed(point, seed, format!("panic: {msg}"))
        }
    };
    run.wall_seconds = start.elapsed().as_secs_f64();
    run
}

fn failed(point: &SweepPoint, seed: u64, message: String) -> RunResult {
    let j_true = envs::parse_env(&point.data.env, point.data.gamma)
        .and_then(|env| {
            let mu = env.behaviour(point.data.behaviour_eps, point.data.var_scale)?;
            OracleReport::compute(&env.mdp, &env.target, &mu)
        })
        .map_or(f64::NAN, |o| o.j_pi);
    RunResult {
        point: point.clone(),
        seed,
        j_true,
        series: Vec::new(),
        final_j_hat: f64::NAN,
        final_squared_error: f64::NAN,
        max_ratio_error: None,
        wall_seconds: 0.0,
        error: Some(message),
    }
}

/// Run every point × seed without touching the filesystem. Results come
/// back ordered by (point, seed position in the config).
pub fn execute_sweep(config: &ExperimentConfig) -> Result<Vec<RunResult>> {
    config.validate()?;
    let points = sweep_points(config)?;
    let jobs: Vec<(&SweepPoint, u64)> = points.iter().flat_map(|p| config.seeds.iter().map(move |&s| (p, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads()?)
        .build()
        .map_err(|e| DiceError::input(format!("worker pool: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(|&(p, s)| run_one(p, s, config)).collect()))
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Standard error of the mean; 0 for a single sample.
pub fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return if n == 1 { 0.0 } else { f64::NAN };
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

pub fn aggregate(runs: &[RunResult]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<usize, Vec<&RunResult>> = BTreeMap::new();
    for r in runs {
        groups.entry(r.point.id).or_default().push(r);
    }
    groups
        .into_values()
        .map(|rs| {
            let p = &rs[0].point;
            let ok: Vec<&&RunResult> = rs.iter().filter(|r| r.ok()).collect();
            let sq: Vec<f64> = ok.iter().map(|r| r.final_squared_error).collect();
            let js: Vec<f64> = ok.iter().map(|r| r.final_j_hat).collect();
            let ratio_errs: Vec<f64> = ok.iter().filter_map(|r| r.max_ratio_error).collect();
            let (lambda1, lambda2) = p.estimator.lambdas();
            AggregateRow {
                point: p.id,
                env: p.data.env.clone(),
                gamma: p.data.gamma,
                num_traj: p.data.num_traj,
                max_len: p.data.max_len,
                behaviour_eps: p.data.behaviour_eps,
                var_scale: p.data.var_scale,
                estimator: p.estimator.name().to_string(),
                label: p.estimator.label(),
                lambda1,
                lambda2,
                lr: p.estimator.lr(),
                seeds: rs.len(),
                failed: rs.len() - ok.len(),
                j_true: rs[0].j_true,
                mean_j_hat: mean(&js),
                mean_final_sq_error: mean(&sq),
                stderr_final_sq_error: std_error(&sq),
                mean_max_ratio_error: (!ratio_errs.is_empty()).then(|| mean(&ratio_errs)),
            }
        })
        .collect()
}

pub fn write_aggregate(rows: &[AggregateRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(AGGREGATE_HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const AGGREGATE_HEADER: [&str; 19] = [
    "point",
    "env",
    "gamma",
    "num_traj",
    "max_len",
    "behaviour_eps",
    "var_scale",
    "estimator",
    "label",
    "lambda1",
    "lambda2",
    "lr",
    "seeds",
    "failed",
    "j_true",
    "mean_j_hat",
    "mean_final_sq_error",
    "stderr_final_sq_error",
    "mean_max_ratio_error",
];

#[derive(Serialize)]
struct IndexRow<'a> {
    run: usize,
    point: usize,
    seed: u64,
    label: String,
    status: &'a str,
    final_j_hat: f64,
    final_squared_error: f64,
    max_ratio_error: Option<f64>,
    message: &'a str,
}

/// Per-run curves, the run index and wall-clock timings.
fn write_runs(runs: &[RunResult], dir: &Path) -> Result<()> {
    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir)?;
    let mut index = csv::Writer::from_path(runs_dir.join("index.csv"))?;
    let mut timings = csv::Writer::from_path(dir.join("timings.csv"))?;
    timings.write_record(["run", "point", "seed", "wall_seconds"])?;
    for (i, r) in runs.iter().enumerate() {
        index.serialize(IndexRow {
            run: i,
            point: r.point.id,
            seed: r.seed,
            label: r.point.estimator.label(),
            status: if r.ok() { "ok" } else { "failed" },
            final_j_hat: r.final_j_hat,
            final_squared_error: r.final_squared_error,
            max_ratio_error: r.max_ratio_error,
            message: r.error.as_deref().unwrap_or(""),
        })?;
        timings.write_record([
            i.to_string(),
            r.point.id.to_string(),
            r.seed.to_string(),
            r.wall_seconds.to_string(),
        ])?;
        let mut w = csv::Writer::from_path(runs_dir.join(format!("run-{i:05}.csv")))?;
        w.write_record(["step", "j_hat", "j_true", "squared_error"])?;
        for s in &r.series {
            w.write_record([
                s.step.to_string(),
                s.j_hat.to_string(),
                r.j_true.to_string(),
                s.squared_error.to_string(),
            ])?;
        }
        w.flush()?;
    }
    index.flush()?;
    timings.flush()?;
    write_results(runs, runs_dir.join("results.jsonl"))
}

/// Run the sweep and write `aggregate.csv`, `plot_data.csv`,
/// `manifest.json`, `runs/` and `timings.csv` under the output directory.
/// Everything except `timings.csv` is a pure function of the config.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    let runs = execute_sweep(config)?;
    let rows = aggregate(&runs);
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;
    write_aggregate(&rows, dir.join("aggregate.csv"))?;
    plotdata::emit_plot_data(&runs, dir.join("plot_data.csv"))?;
    write_runs(&runs, dir)?;

    let mut selected = BTreeMap::new();
    let mut names: Vec<&str> = rows.iter().map(|r| r.estimator.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    for name in names {
        let subset: Vec<AggregateRow> = rows.iter().filter(|r| r.estimator == name).cloned().collect();
        if let Ok(best) = select::select_best(&subset) {
            selected.insert(name.to_string(), best);
        }
    }
    let manifest = serde_json::json!({
        "config": config,
        "points": rows.len(),
        "runs": runs.len(),
        "failed_runs": runs.iter().filter(|r| !r.ok()).count(),
        "selected": selected,
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(SweepOutput { runs, aggregate: rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn std_error_small_cases() {
        assert_eq!(std_error(&[3.0]), 0.0);
        assert!(std_error(&[]).is_nan());
        assert!((std_error(&[1.0, 3.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn thread_count_parsing() {
        // only checks the fallback path; the variable is not set in tests
        if std::env::var("DICELAB_THREADS").is_err() {
            assert!(worker_threads().unwrap() >= 1);
        }
    }
}
