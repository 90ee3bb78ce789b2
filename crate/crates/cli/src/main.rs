mod chart;
mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::parse_list;

#[derive(Debug, Parser)]
#[command(name = "explain-distill", version, about = "Explanation distillation for implicit discourse relations")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed or comma-separated seeds.
    #[arg(long, global = true, value_parser = parse_seeds)]
    seed: Option<List<u64>>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

/// A comma-separated flag value.
#[derive(Debug, Clone)]
pub struct List<T>(pub Vec<T>);

fn parse_seeds(s: &str) -> Result<List<u64>, String> {
    let seeds = parse_list::<u64>(s)?;
    if seeds.is_empty() {
        return Err("at least one seed is required".into());
    }
    Ok(List(seeds))
}

fn parse_floats(s: &str) -> Result<List<f64>, String> {
    parse_list::<f64>(s).map(List)
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ask the teacher LLM for an explanation of every labelled instance.
    BuildExplanations(BuildArgs),
    /// Two-stage joint training, once per seed.
    Train(TrainArgs),
    /// Predict and explain a dataset with a trained checkpoint.
    Evaluate(EvalArgs),
    /// Occlusion and internal-noise analysis of a checkpoint.
    Faithfulness(FaithArgs),
    /// Summarise finished runs and redraw their charts.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Labelled dataset to enrich.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Replay recorded completions instead of calling a remote model.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Exit 0 even if some instances need manual review.
    #[arg(long)]
    allow_review: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Per-stage epoch override, applied to every stage.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset to evaluate; defaults to the config's test split.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FaithArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Occlusion fractions, e.g. 0.1,0.2,0.3.
    #[arg(long, value_parser = parse_floats)]
    occlusion: Option<List<f64>>,
    /// Noise variances, ascending.
    #[arg(long, value_parser = parse_floats)]
    noise: Option<List<f64>>,
    /// Encoder site for noise: `final` or a layer index.
    #[arg(long)]
    layer: Option<String>,
    /// Noisy passes per instance.
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directories of earlier runs.
    #[arg(long = "run", required = true)]
    runs: Vec<PathBuf>,
}

/// Exit 1 for domain failures, 2 for configuration or environment errors.
#[derive(Debug)]
pub enum Failure {
    Domain(anyhow::Error),
    Config(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Config(_) => 2,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Domain(e) | Failure::Config(e) => e,
        }
    }
}

pub trait Classify<T> {
    fn config_err(self) -> Result<T, Failure>;
    fn domain_err(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config_err(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn domain_err(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Domain(e.into()))
    }
}

pub struct Globals {
    pub config: config::Config,
    pub seeds: Option<Vec<u64>>,
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(p) => config::Config::load(p).config_err()?,
        None => config::Config::default(),
    };
    let g = Globals {
        config,
        seeds: cli.seed.map(|l| l.0),
        out: cli.out,
    };
    match cli.command {
        Command::BuildExplanations(a) => commands::build_explanations(g, a),
        Command::Train(a) => commands::train(g, a),
        Command::Evaluate(a) => commands::evaluate(g, a),
        Command::Faithfulness(a) => commands::faithfulness(g, a),
        Command::Report(a) => commands::report(g, a),
    }
}

/// The error chain, skipping causes already spelled out by an outer message.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", describe(f.error()));
            ExitCode::from(f.code())
        }
    }
}
