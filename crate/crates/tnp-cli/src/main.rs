//! Command-line driver for the surrogate optimizer: pre-training,
//! meta-training, single runs, benchmark grids, and report generation.
//!
//! Configs are TOML (or JSON when the path ends in .json); `--seed`,
//! `--out`, and `--method` override the corresponding config fields.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use tnp_core::bench::{
    build_histories, experiment_historical, metatrain, pretrain, report, run_experiment,
    ExperimentConfig, FamilySpec, PretrainConfig,
};
use tnp_core::nn::seed_stream;
use tnp_core::smbo::{run_smbo, Method, SmboConfig};
use tnp_core::surrogate::{NpConfig, NpParams};

#[derive(Parser)]
#[command(
    name = "tnp",
    version,
    about = "Transfer-aware sequential model-based optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train a fresh surrogate on functions drawn from a smooth prior
    Pretrain(PretrainArgs),
    /// Meta-train shared parameters and starting configurations across
    /// historical observation sets
    Metatrain(MetatrainArgs),
    /// One optimization run on a single family member
    Run(RunArgs),
    /// The full method x task x seed grid, with CSV artifacts
    Bench(BenchArgs),
    /// Summarize an existing metrics.csv into summary.csv
    Report(ReportArgs),
}

#[derive(Args)]
struct PretrainArgs {
    /// Pre-training config (TOML, or JSON with a .json extension)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the checkpoint path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetatrainArgs {
    /// Meta-training config (TOML, or JSON with a .json extension)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the checkpoint path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config; its grid settings are ignored except the budget
    #[arg(long)]
    config: PathBuf,
    /// Which method to run (random | gp | cnp | tnp)
    #[arg(long)]
    method: String,
    /// Family member index to optimize
    #[arg(long, default_value_t = 0)]
    task: u64,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment config (TOML, or JSON with a .json extension)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the config's method list (repeatable)
    #[arg(long)]
    method: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// An existing metrics.csv
    metrics: PathBuf,
    /// Where to write the summary (default: summary.csv next to the input)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn default_batches() -> usize {
    3000
}

fn default_functions_per_batch() -> usize {
    4
}

fn default_min_points_per_function() -> usize {
    4
}

fn default_points_per_function() -> usize {
    16
}

fn default_learning_rate() -> f64 {
    1e-3
}

fn default_params_out() -> PathBuf {
    PathBuf::from("params.json")
}

/// Config file for `tnp pretrain`.
#[derive(Debug, Deserialize)]
struct PretrainFile {
    seed: u64,
    arch: NpConfig,
    #[serde(default = "default_batches")]
    batches: usize,
    #[serde(default = "default_functions_per_batch")]
    functions_per_batch: usize,
    #[serde(default = "default_min_points_per_function")]
    min_points_per_function: usize,
    #[serde(default = "default_points_per_function")]
    points_per_function: usize,
    #[serde(default = "default_learning_rate")]
    learning_rate: f64,
    #[serde(default = "default_params_out")]
    out: PathBuf,
}

fn default_historical_trials() -> usize {
    30
}

fn default_historical_base() -> String {
    "gp".into()
}

fn default_n_init() -> usize {
    3
}

fn default_epochs() -> usize {
    20
}

fn default_meta_out() -> PathBuf {
    PathBuf::from("meta.json")
}

/// Config file for `tnp metatrain`.
#[derive(Debug, Deserialize)]
struct MetatrainFile {
    seed: u64,
    /// Pre-trained surrogate checkpoint to start from.
    params: PathBuf,
    family: FamilySpec,
    /// How many family members to train across.
    num_historical: usize,
    /// First member index; set it past an experiment's num_tasks to keep
    /// training members disjoint from evaluation targets.
    #[serde(default)]
    first_member: u64,
    #[serde(default = "default_historical_trials")]
    historical_trials: usize,
    /// Optimizer producing the training observation sets (random | gp).
    #[serde(default = "default_historical_base")]
    historical_base: String,
    /// Number of starting configurations to learn.
    #[serde(default = "default_n_init")]
    n_init: usize,
    #[serde(default = "default_epochs")]
    epochs: usize,
    #[serde(default = "default_meta_out")]
    out: PathBuf,
}

fn cmd_pretrain(args: &PretrainArgs) -> Result<()> {
    let mut file: PretrainFile = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        file.seed = seed;
    }
    if let Some(out) = &args.out {
        file.out = out.clone();
    }
    let config = PretrainConfig {
        arch: file.arch,
        batches: file.batches,
        functions_per_batch: file.functions_per_batch,
        min_points_per_function: file.min_points_per_function,
        points_per_function: file.points_per_function,
        learning_rate: file.learning_rate,
        seed: file.seed,
    };
    let (params, curve) = pretrain(&config)?;
    params.save(&file.out)?;
    let first = curve.first().copied().unwrap_or(f64::NAN);
    let last = curve.last().copied().unwrap_or(f64::NAN);
    println!(
        "pretrained {} batches: loss {first:.4} -> {last:.4}; wrote {}",
        curve.len(),
        file.out.display()
    );
    Ok(())
}

fn cmd_metatrain(args: &MetatrainArgs) -> Result<()> {
    let mut file: MetatrainFile = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        file.seed = seed;
    }
    if let Some(out) = &args.out {
        file.out = out.clone();
    }
    let base = match file.historical_base.as_str() {
        "random" => Method::RandomSearch,
        "gp" => Method::GaussianProcess,
        other => bail!("historical base must be 'random' or 'gp', got '{other}'"),
    };
    let family = file.family.build(seed_stream(file.seed, "family"))?;
    let params = NpParams::load(&file.params)?;
    if params.input_dim() != family.dim() {
        bail!(
            "checkpoint works on {} dimensions, family has {}",
            params.input_dim(),
            family.dim()
        );
    }
    let histories = build_histories(
        &family,
        file.first_member,
        file.num_historical,
        &base,
        file.historical_trials,
        seed_stream(file.seed, "historical"),
    )?;
    let (state, curve) = metatrain(params, &histories, file.n_init, file.epochs, file.seed)?;
    state.save(&file.out)?;
    let first = curve.first().copied().unwrap_or(f64::NAN);
    let last = curve.last().copied().unwrap_or(f64::NAN);
    println!(
        "meta-trained {} epochs over {} sets: mean loss {first:.4} -> {last:.4}; wrote {}",
        curve.len(),
        file.num_historical,
        file.out.display()
    );
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let mut config: ExperimentConfig = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let family = config.family.build(seed_stream(config.seed, "family"))?;
    let method = config.resolve_method(&args.method, family.dim())?;
    let task = family.member(args.task)?;
    let historical = if matches!(method, Method::TransferNp { .. }) {
        experiment_historical(&config, &family)?
    } else {
        Vec::new()
    };
    // same derivation as the grid's first repetition of this task
    let smbo = SmboConfig {
        seed: seed_stream(config.seed, &format!("run-{}-0", args.task)),
        ..config.smbo
    };
    let num_initial = smbo.num_initial;
    let outcome = run_smbo(&task, &method, &historical, &smbo)?;
    println!("trial,x,y,best_so_far,millis");
    let mut best = f64::NEG_INFINITY;
    for (i, obs) in outcome.history.observations().iter().enumerate() {
        best = best.max(obs.y());
        let joined = obs
            .x()
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(";");
        let millis = if i >= num_initial {
            outcome.records[i - num_initial].millis
        } else {
            0
        };
        println!("{},{},{},{},{}", i + 1, joined, obs.y(), best, millis);
    }
    let best = outcome
        .best_x
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(";");
    println!("# best {} at {}", outcome.best_y, best);
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let mut config: ExperimentConfig = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if !args.method.is_empty() {
        config.methods = args.method.clone();
    }
    let report = run_experiment(&config)?;
    println!(
        "{} runs failed; wrote {} trial rows, {} metric rows to {}",
        report.failures.len(),
        report.trials.len(),
        report.metrics.len(),
        config.out_dir.display()
    );
    for (run_id, message) in &report.failures {
        eprintln!("failed {run_id}: {message}");
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.metrics.with_file_name("summary.csv"));
    let summary = report(&args.metrics, &out)?;
    println!("{} summary rows; wrote {}", summary.len(), out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Pretrain(args) => cmd_pretrain(args),
        Command::Metatrain(args) => cmd_metatrain(args),
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Report(args) => cmd_report(args),
    }
}
