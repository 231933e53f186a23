//! `ticl`: command-line harness for temporally-consistent incremental
//! sequence classification on absorbing Markov chains.
//!
//! Exit codes: 0 on success, 2 on user/config errors (including invalid
//! chains and malformed files), 3 on numerical failures (non-convergence,
//! training divergence).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ticl::error::{Error, Result};
use ticl::estimation::{estimate_direct, estimate_indirect};
use ticl::experiments::{
    build_layered_chain, run_consistency_study, run_lambda_sweep, run_mse_ratio_study,
    ExperimentReport, LayeredChainSpec,
};
use ticl::io;
use ticl::markov::{DEFAULT_MAX_ITERS, DEFAULT_TOL};
use ticl::trainer::{fit_gradient, LossScale, TargetRefresh, TrainConfig};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "TICL_OUT_DIR";

#[derive(Parser)]
#[command(name = "ticl", version, about = "Incremental sequence classification on absorbing Markov chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a chain's absorption probabilities and write them as CSV.
    Solve(SolveArgs),
    /// Sample labelled trajectories from a chain.
    Sample(SampleArgs),
    /// Estimate absorption probabilities from a dataset.
    Estimate(EstimateArgs),
    /// Train a tabular softmax classifier with the TC-λ loss.
    Train(TrainArgs),
    /// Run a named replication study from a JSON config.
    Study(StudyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMethod {
    FixedPoint,
    ClosedForm,
}

#[derive(Args)]
struct SolveArgs {
    /// Chain file (JSON with M, K, Q, R, initial).
    chain: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "fixed-point")]
    method: SolveMethod,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
}

#[derive(Args)]
struct SampleArgs {
    chain: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimateMethod {
    Direct,
    Indirect,
}

#[derive(Args)]
struct EstimateArgs {
    /// Dataset file: one `label,s_1 s_2 ... s_T` record per line.
    data: PathBuf,
    #[arg(long, value_enum)]
    method: EstimateMethod,
    #[arg(long)]
    out: PathBuf,
    /// Number of transient states (inferred from the data when omitted).
    #[arg(long)]
    m: Option<usize>,
    /// Number of classes (inferred from the data when omitted).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
enum RefreshFlag {
    #[default]
    PerStep,
    PerOuter,
}

impl From<RefreshFlag> for TargetRefresh {
    fn from(f: RefreshFlag) -> Self {
        match f {
            RefreshFlag::PerStep => TargetRefresh::PerStep,
            RefreshFlag::PerOuter => TargetRefresh::PerOuterIteration,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
enum LossScaleFlag {
    /// Average the loss over the prefixes of each sequence.
    #[default]
    Mean,
    /// Sum the loss over prefixes (the tabular-equivalence scaling).
    Sum,
}

impl From<LossScaleFlag> for LossScale {
    fn from(f: LossScaleFlag) -> Self {
        match f {
            LossScaleFlag::Mean => LossScale::PerPrefixMean,
            LossScaleFlag::Sum => LossScale::PrefixSum,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    data: PathBuf,
    /// Temporal-consistency parameter in [0, 1].
    #[arg(long, conflicts_with = "lookahead")]
    lambda: Option<f64>,
    /// Effective lookahead L, mapped to lambda = L / (1 + L).
    #[arg(long)]
    lookahead: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "per-step")]
    refresh: RefreshFlag,
    #[arg(long, default_value_t = 10)]
    outer_iterations: usize,
    #[arg(long, value_enum, default_value = "mean")]
    loss_scale: LossScaleFlag,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyName {
    MseRatio,
    Consistency,
    LambdaSweep,
}

impl StudyName {
    fn as_str(&self) -> &'static str {
        match self {
            StudyName::MseRatio => "mse-ratio",
            StudyName::Consistency => "consistency",
            StudyName::LambdaSweep => "lambda-sweep",
        }
    }
}

#[derive(Args)]
struct StudyArgs {
    name: StudyName,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides the config's run count.
    #[arg(long)]
    runs: Option<usize>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MseRatioConfig {
    #[serde(rename = "W_values")]
    w_values: Vec<usize>,
    #[serde(rename = "T")]
    t: usize,
    runs: usize,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConsistencyConfig {
    #[serde(rename = "W")]
    w: usize,
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "N_values")]
    n_values: Vec<usize>,
    runs: usize,
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LambdaSweepConfig {
    #[serde(rename = "W")]
    w: usize,
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "N")]
    n: usize,
    lambda_values: Vec<f64>,
    learning_rate: f64,
    epochs: usize,
    batch_size: usize,
    runs: usize,
    seed: u64,
    #[serde(default = "default_outer_iterations")]
    outer_iterations: usize,
    #[serde(default)]
    refresh: RefreshFlag,
    #[serde(default)]
    loss_scale: LossScaleFlag,
}

fn default_outer_iterations() -> usize {
    10
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence { .. }
        | Error::Diverged { .. }
        | Error::Singular(_)
        | Error::StepCap { .. } => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Train(args) => cmd_train(args),
        Command::Study(args) => cmd_study(args),
    }
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let chain = io::read_chain::<f64>(&args.chain)?;
    chain.require_valid()?;
    let probs = match args.method {
        SolveMethod::FixedPoint => {
            chain
                .solve_absorption_fixed_point(None, args.tol, args.max_iters)?
                .probs
        }
        SolveMethod::ClosedForm => chain.solve_absorption_closed_form()?,
    };
    fs::write(&args.out, io::prob_matrix_to_csv(&probs))?;
    Ok(())
}

fn cmd_sample(args: SampleArgs) -> Result<()> {
    if args.n == 0 {
        return Err(Error::InvalidInput("--n must be at least 1".into()));
    }
    let chain = io::read_chain::<f64>(&args.chain)?;
    let data = chain.sample_trajectories(args.n, args.seed)?;
    io::write_dataset(&args.out, &data)?;
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let data = io::read_dataset(&args.data, args.m, args.k)?;
    let report = match args.method {
        EstimateMethod::Direct => estimate_direct::<f64>(&data),
        EstimateMethod::Indirect => estimate_indirect::<f64>(&data, args.tol, args.max_iters)?,
    };
    fs::write(&args.out, io::estimate_report_to_csv(&report))?;
    Ok(())
}

fn resolve_lambda(lambda: Option<f64>, lookahead: Option<f64>) -> Result<f64> {
    let lambda = match (lambda, lookahead) {
        (Some(l), None) => l,
        (None, Some(la)) => {
            if la < 0.0 {
                return Err(Error::InvalidInput("--lookahead must be nonnegative".into()));
            }
            la / (1.0 + la)
        }
        (None, None) => {
            return Err(Error::InvalidInput(
                "one of --lambda or --lookahead is required".into(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap enforces mutual exclusion"),
    };
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!(
            "lambda must be in [0, 1], got {lambda}"
        )));
    }
    Ok(lambda)
}

fn out_dir_or_default(dir: Option<PathBuf>) -> PathBuf {
    dir.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let lambda = resolve_lambda(args.lambda, args.lookahead)?;
    let data = io::read_dataset(&args.data, args.m, args.k)?;
    let cfg = TrainConfig::<f64> {
        lambda,
        learning_rate: args.lr,
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
        outer_iterations: args.outer_iterations,
        target_refresh: args.refresh.into(),
        loss_scale: args.loss_scale.into(),
    };
    cfg.validate()?;
    let report = fit_gradient(&data, &cfg, None)?;

    let out_dir = out_dir_or_default(args.out_dir);
    fs::create_dir_all(&out_dir)?;
    fs::write(out_dir.join("train_report.csv"), io::train_report_to_csv(&report))?;
    io::write_checkpoint(&out_dir.join("model.json"), &report.model)?;
    let manifest = serde_json::json!({
        "command": "train",
        "data": args.data,
        "lambda": lambda,
        "learning_rate": args.lr,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "seed": args.seed,
        "outer_iterations": args.outer_iterations,
        "refresh": match args.refresh { RefreshFlag::PerStep => "per-step", RefreshFlag::PerOuter => "per-outer" },
        "loss_scale": match args.loss_scale { LossScaleFlag::Mean => "mean", LossScaleFlag::Sum => "sum" },
    });
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(())
}

/// Accepts either a bare config object or a previously written manifest
/// (`{"study": ..., "config": {...}}`), so manifests replay directly.
fn load_config_value(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    match value.get("config") {
        Some(inner) => Ok(inner.clone()),
        None => Ok(value),
    }
}

fn parse_config<C: for<'de> Deserialize<'de>>(value: serde_json::Value) -> Result<C> {
    serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("manifest serializes");
    fs::write(path, text + "\n")?;
    Ok(())
}

fn cmd_study(args: StudyArgs) -> Result<()> {
    let value = load_config_value(&args.config)?;
    let out_dir = out_dir_or_default(args.out_dir);
    fs::create_dir_all(&out_dir)?;

    let (report, merged): (ExperimentReport, serde_json::Value) = match args.name {
        StudyName::MseRatio => {
            let mut cfg: MseRatioConfig = parse_config(value)?;
            if let Some(runs) = args.runs {
                cfg.runs = runs;
            }
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let report = run_mse_ratio_study::<f64>(&cfg.w_values, cfg.t, cfg.runs, cfg.seed)?;
            (report, serde_json::to_value(&cfg).expect("config serializes"))
        }
        StudyName::Consistency => {
            let mut cfg: ConsistencyConfig = parse_config(value)?;
            if let Some(runs) = args.runs {
                cfg.runs = runs;
            }
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let chain = build_layered_chain::<f64>(LayeredChainSpec::new(cfg.w, cfg.t)?);
            let report = run_consistency_study(&chain, &cfg.n_values, cfg.runs, cfg.seed)?;
            (report, serde_json::to_value(&cfg).expect("config serializes"))
        }
        StudyName::LambdaSweep => {
            let mut cfg: LambdaSweepConfig = parse_config(value)?;
            if let Some(runs) = args.runs {
                cfg.runs = runs;
            }
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let chain = build_layered_chain::<f64>(LayeredChainSpec::new(cfg.w, cfg.t)?);
            let train_cfg = TrainConfig::<f64> {
                lambda: 1.0,
                learning_rate: cfg.learning_rate,
                epochs: cfg.epochs,
                batch_size: cfg.batch_size,
                seed: cfg.seed,
                outer_iterations: cfg.outer_iterations,
                target_refresh: cfg.refresh.into(),
                loss_scale: cfg.loss_scale.into(),
            };
            let report = run_lambda_sweep(
                &chain,
                cfg.n,
                &cfg.lambda_values,
                &train_cfg,
                cfg.runs,
                cfg.seed,
            )?;
            (report, serde_json::to_value(&cfg).expect("config serializes"))
        }
    };

    let name = args.name.as_str();
    fs::write(out_dir.join(format!("{name}.csv")), report.to_csv())?;
    let manifest = serde_json::json!({
        "study": name,
        "config": merged,
    });
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(())
}
