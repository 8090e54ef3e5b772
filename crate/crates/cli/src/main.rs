use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dicelab::dataset::{generate, GenerateOptions, TrajectoryDataset, TruncationPolicy};
use dicelab::envs;
use dicelab::estimators::InitialCorrection;
use dicelab::harness::{
    self, emit_plot_data, max_ratio_error, read_aggregate, read_results, run_estimator, run_sweep, select_best,
    EstimatorSpec, EvalContext, ExperimentConfig, HSpec,
};
use dicelab::mdp::{Policy, TabularMdp};
use dicelab::oracle::OracleReport;

#[derive(Parser)]
#[command(name = "dicelab", version, about = "Off-policy evaluation with Average-DICE on tabular MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate behaviour datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Exact quantities for an environment and policy pair.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Run one estimator on a saved dataset and write its training curve.
    Eval(EvalArgs),
    /// Config-driven experiment sweeps.
    #[command(subcommand)]
    Sweep(SweepCommand),
}

#[derive(Subcommand)]
enum DatasetCommand {
    Gen(GenArgs),
}

#[derive(Subcommand)]
enum OracleCommand {
    Compute(OracleArgs),
}

#[derive(Subcommand)]
enum SweepCommand {
    /// Run every point of a config and write results under its output_dir.
    Run {
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Pick the hyperparameter point with the lowest mean final squared error.
    Select {
        aggregate: PathBuf,
        #[arg(long)]
        estimator: Option<String>,
    },
    /// Rebuild plot data from a finished sweep directory.
    Plotdata {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EnvArgs {
    /// Built-in environment (chain:N, loop:N, gridworld:WxH) or an MDP JSON file.
    #[arg(long)]
    env: String,
    /// Discount; defaults to 0.95 for built-ins and the file's value otherwise.
    #[arg(long)]
    gamma: Option<f64>,
    /// Weight of the uniform policy in the behaviour mixture.
    #[arg(long, default_value_t = 0.3)]
    behaviour_eps: f64,
    /// Flattening of the target before mixing (1 leaves it unchanged).
    #[arg(long, default_value_t = 1.0)]
    var_scale: f64,
    /// Target policy JSON; required for MDP files.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Behaviour policy JSON; replaces the eps/var-scale construction.
    #[arg(long)]
    behaviour: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long)]
    num_traj: usize,
    #[arg(long, default_value_t = 100)]
    max_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "include")]
    truncation: TruncationPolicy,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    env: EnvArgs,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorKind {
    AvgDice,
    AvgDiceLinear,
    Td,
    CopTd,
    AvgReward,
}

#[derive(Clone, Copy, ValueEnum)]
enum Correction {
    Ratio,
    Start,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    estimator: EstimatorKind,
    #[arg(long)]
    dataset: PathBuf,
    /// Oracle report; enables j_true, squared_error and max_ratio_error.
    #[arg(long)]
    oracle: Option<PathBuf>,
    #[arg(long, default_value_t = envs::DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = 0.001)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.5)]
    lambda2: f64,
    /// Defaults to 0.0005 for avg-dice-linear and 0.05 for td / cop-td.
    #[arg(long)]
    lr: Option<f64>,
    /// Makes the td / cop-td rate lr/(1+t)^p.
    #[arg(long)]
    decay_power: Option<f64>,
    /// Defaults to 2000 for avg-dice-linear and 100 for td / cop-td.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 512)]
    batch_size: usize,
    /// onehot or random:D
    #[arg(long, default_value = "onehot")]
    features: String,
    #[arg(long, default_value_t = 0)]
    feature_seed: u64,
    /// empirical (n/K), oracle (E_mu[T]) or a number.
    #[arg(long, default_value = "empirical")]
    h: HSpec,
    #[arg(long, value_enum, default_value_t = Correction::Ratio)]
    correction: Correction,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Environment for td / cop-td; defaults to the one recorded in the dataset.
    #[arg(long)]
    env: Option<String>,
    /// Target policy JSON when the environment is an MDP file.
    #[arg(long)]
    target: Option<PathBuf>,
    /// CSV destination; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct ResolvedEnv {
    spec: Option<String>,
    mdp: TabularMdp,
    target: Policy,
    behaviour: Policy,
}

fn read_policy(path: &Path) -> Result<Policy> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing policy {}", path.display()))
}

fn is_builtin(spec: &str) -> bool {
    spec.contains(':') && !Path::new(spec).exists()
}

fn resolve_env(
    spec: &str,
    gamma: Option<f64>,
    eps: f64,
    var_scale: f64,
    target: Option<&Path>,
    behaviour: Option<&Path>,
) -> Result<ResolvedEnv> {
    let (spec_name, mdp, default_target) = if is_builtin(spec) {
        let env = envs::parse_env(spec, gamma.unwrap_or(envs::DEFAULT_GAMMA))?;
        (Some(env.spec), env.mdp, Some(env.target))
    } else {
        let text = fs::read_to_string(spec).with_context(|| format!("reading environment {spec}"))?;
        let mut mdp = TabularMdp::from_json(&text).with_context(|| format!("parsing environment {spec}"))?;
        if let Some(g) = gamma {
            mdp = mdp.with_discount(g)?;
        }
        (None, mdp, None)
    };
    let target = match target {
        Some(p) => read_policy(p)?,
        None => default_target.ok_or_else(|| anyhow!("--target is required for environment files"))?,
    };
    mdp.check_policy(&target)?;
    let behaviour = match behaviour {
        Some(p) => read_policy(p)?,
        None => target.temper(var_scale)?.mix_uniform(eps)?,
    };
    mdp.check_policy(&behaviour)?;
    Ok(ResolvedEnv { spec: spec_name, mdp, target, behaviour })
}

impl EnvArgs {
    fn resolve(&self) -> Result<ResolvedEnv> {
        resolve_env(
            &self.env,
            self.gamma,
            self.behaviour_eps,
            self.var_scale,
            self.target.as_deref(),
            self.behaviour.as_deref(),
        )
    }
}

fn dataset_gen(args: &GenArgs) -> Result<()> {
    let env = args.env.resolve()?;
    let opts = GenerateOptions {
        num_trajectories: args.num_traj,
        max_len: args.max_len,
        seed: args.seed,
        truncation: args.truncation,
    };
    let mut ds = generate(&env.mdp, &env.behaviour, &env.target, &opts)?;
    ds.header.env = env.spec.clone();
    if args.env.behaviour.is_none() {
        ds.header.behaviour_eps = Some(args.env.behaviour_eps);
        ds.header.var_scale = Some(args.env.var_scale);
    }
    ds.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "wrote {} transitions from {} trajectories ({} completed) to {}",
        ds.num_transitions(),
        ds.num_trajectories(),
        ds.completed_trajectories(),
        args.out.display()
    );
    Ok(())
}

fn oracle_compute(args: &OracleArgs) -> Result<()> {
    let env = args.env.resolve()?;
    let report = OracleReport::compute(&env.mdp, &env.target, &env.behaviour)?;
    let text = report.to_json()? + "\n";
    match &args.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn eval_spec(args: &EvalArgs) -> EstimatorSpec {
    let correction = match args.correction {
        Correction::Ratio => InitialCorrection::DistributionRatio,
        Correction::Start => InitialCorrection::StartIndicator,
    };
    match args.estimator {
        EstimatorKind::AvgDice => EstimatorSpec::AvgDice,
        EstimatorKind::AvgReward => EstimatorSpec::AvgReward,
        EstimatorKind::AvgDiceLinear => EstimatorSpec::AvgDiceLinear {
            features: args.features.clone(),
            feature_seed: args.feature_seed,
            lambda1: args.lambda1,
            lambda2: args.lambda2,
            lr: args.lr.unwrap_or(0.0005),
            epochs: args.epochs.unwrap_or(2000),
            batch_size: args.batch_size,
            h: args.h,
        },
        EstimatorKind::Td => EstimatorSpec::Td {
            lr: args.lr.unwrap_or(0.05),
            decay_power: args.decay_power,
            epochs: args.epochs.unwrap_or(100),
        },
        EstimatorKind::CopTd => EstimatorSpec::CopTd {
            lr: args.lr.unwrap_or(0.05),
            decay_power: args.decay_power,
            epochs: args.epochs.unwrap_or(100),
            correction,
        },
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.filter(|v| v.is_finite()).map(|v| v.to_string()).unwrap_or_default()
}

fn eval(args: &EvalArgs) -> Result<()> {
    let ds = TrajectoryDataset::load(&args.dataset).with_context(|| format!("loading {}", args.dataset.display()))?;
    let oracle = match &args.oracle {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let o = OracleReport::from_json(&text)?;
            if o.density_ratio.len() != ds.num_states() {
                bail!("oracle covers {} states, dataset has {}", o.density_ratio.len(), ds.num_states());
            }
            Some(o)
        }
        None => None,
    };
    let env_spec = args.env.clone().or_else(|| ds.header.env.clone());
    let env = match env_spec {
        Some(spec) => {
            let env = resolve_env(&spec, Some(args.gamma), 0.0, 1.0, args.target.as_deref(), None)?;
            if !ds.header.target_hash.is_empty() && env.target.content_hash() != ds.header.target_hash {
                bail!("target policy does not match the one recorded in the dataset");
            }
            Some(env)
        }
        None => None,
    };
    let ctx = EvalContext {
        initial_dist: env.as_ref().map(|e| e.mdp.initial_dist()),
        target: env.as_ref().map(|e| &e.target),
        gamma: args.gamma,
        oracle: oracle.as_ref(),
        seed: args.seed,
    };
    let trace = run_estimator(&eval_spec(args), &ds, &ctx)?;

    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    writeln!(out, "step,j_hat,j_true,squared_error,mass,max_ratio_error")?;
    let j_true = oracle.as_ref().map(|o| o.j_pi);
    for c in &trace.curve {
        let ratio_err = oracle.as_ref().and_then(|o| max_ratio_error(&c.ratio, o));
        writeln!(
            out,
            "{},{},{},{},{},{}",
            c.step,
            c.j_hat,
            fmt_opt(j_true),
            fmt_opt(j_true.map(|j| (c.j_hat - j).powi(2))),
            fmt_opt(Some(c.mass)),
            fmt_opt(ratio_err)
        )?;
    }
    out.flush()?;
    eprintln!("j_hat = {}", trace.estimate.j_hat);
    Ok(())
}

fn sweep(cmd: &SweepCommand) -> Result<()> {
    match cmd {
        SweepCommand::Run { config, out_dir } => {
            let mut cfg = ExperimentConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(dir) = out_dir {
                cfg.output_dir = dir.clone();
            }
            let out = run_sweep(&cfg)?;
            let failed = out.runs.iter().filter(|r| !r.ok()).count();
            eprintln!(
                "{} points, {} runs ({} failed); results in {}",
                out.aggregate.len(),
                out.runs.len(),
                failed,
                cfg.output_dir.display()
            );
        }
        SweepCommand::Select { aggregate, estimator } => {
            let mut rows = read_aggregate(aggregate).with_context(|| format!("reading {}", aggregate.display()))?;
            if let Some(name) = estimator {
                rows.retain(|r| &r.estimator == name);
            }
            let best = select_best(&rows)?;
            println!("{}", serde_json::to_string_pretty(&best)?);
        }
        SweepCommand::Plotdata { dir, out } => {
            let runs = read_results(dir.join("runs").join("results.jsonl"))?;
            let path = out.clone().unwrap_or_else(|| dir.join("plot_data.csv"));
            emit_plot_data(&runs, &path)?;
            eprintln!("wrote {} rows to {}", harness::plotdata::plot_rows(&runs).len(), path.display());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Dataset(DatasetCommand::Gen(args)) => dataset_gen(args),
        Command::Oracle(OracleCommand::Compute(args)) => oracle_compute(args),
        Command::Eval(args) => eval(args),
        Command::Sweep(cmd) => sweep(cmd),
    }
}
