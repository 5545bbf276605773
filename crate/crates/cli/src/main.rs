//! `vulnscore`: ingest CVE records, score vectors, collect LLM predictions,
//! evaluate them and train meta-classifiers.
//!
//! Exit codes: 0 success, 2 input error, 3 provider error, 4 internal
//! invariant violation.

mod commands;
mod config;
mod failure;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vulnscore::gateway::Mode;

use config::{AppConfig, Overrides};

#[derive(Parser)]
#[command(
    name = "vulnscore",
    version,
    about = "CVSS v3.1 base-metric prediction toolkit"
)]
struct Cli {
    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for splits and meta-model training
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Provider mode: live, replay or record
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Worked examples per prompt (0, 2, 5 or 10)
    #[arg(long, global = true)]
    shots: Option<usize>,
    /// Descriptions per prompt
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    /// Increase log verbosity (-v, -vv)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter a directory of CVE JSON records into a dataset
    Ingest { input_dir: PathBuf },
    /// Score vector strings, or every entry of a dataset
    Score {
        vectors: Vec<String>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Query providers (or the replay cache) for metric predictions
    Predict {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Accuracy, weighted P/R/F1, MAE and baselines per metric and model
    Evaluate {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Class distributions, severity, association and description analysis
    Analyze {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Train and evaluate meta-classifiers over the model predictions
    Meta {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Render SVG charts and a markdown summary from the output directory
    Report,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "live" => Ok(Mode::Live),
        "replay" => Ok(Mode::Replay),
        "record" => Ok(Mode::Record),
        _ => Err(format!("expected live, replay or record, got {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let overrides = Overrides {
        out: cli.out,
        seed: cli.seed,
        mode: cli.mode,
        shots: cli.shots,
        batch_size: cli.batch_size,
    };
    let result = AppConfig::load(cli.config.as_deref(), &overrides).and_then(|cfg| {
        use commands::*;
        match cli.command {
            Command::Ingest { input_dir } => ingest::run(&cfg, &input_dir),
            Command::Score { vectors, dataset } => score::run(&cfg, &vectors, dataset.as_deref()),
            Command::Predict { dataset } => predict::run(&cfg, dataset),
            Command::Evaluate {
                dataset,
                predictions,
            } => evaluate::run(&cfg, dataset, predictions),
            Command::Analyze {
                dataset,
                predictions,
            } => analyze::run(&cfg, dataset, predictions),
            Command::Meta {
                dataset,
                predictions,
            } => meta::run(&cfg, dataset, predictions),
            Command::Report => report::run(&cfg),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.kind.exit_code()
        }
    }
}
