use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod output;
mod report;

use config::{RunConfig, SynthConfig};

/// Neural-network discrete choice models: synthesize data, train, search,
/// repeat, and extract economic information.
#[derive(Debug, Parser)]
#[command(name = "choicenet", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Data file (CSV with a `<stem>.schema.json` sidecar); overrides the config.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed; overrides the config's top-level seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for search and repeat.
    #[arg(long, global = true, env = "CHOICENET_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with its schema and ground truth.
    Synth {
        /// Preset name: travel, survey or nonlinear.
        #[arg(long)]
        preset: Option<String>,
        /// Number of observations.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train one model with the configured hyperparameters.
    Train,
    /// Random hyperparameter search.
    Search {
        /// Number of candidates (default 20).
        #[arg(long)]
        candidates: Option<usize>,
    },
    /// Repeated trainings with fixed hyperparameters and consecutive seeds.
    Repeat {
        /// Number of trainings (default 10).
        #[arg(long)]
        count: Option<usize>,
        /// Take hyperparameters and split from this model file.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Economic information for one or more model groups.
    Econ {
        /// Model group as NAME=PATH or PATH (directory or model file); repeatable.
        #[arg(long = "ensemble", required = true)]
        ensembles: Vec<String>,
    },
    /// Text summary of an econ bundle.
    Report {
        /// Directory written by `econ`.
        #[arg(long)]
        bundle: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Train => "train",
            Command::Search { .. } => "search",
            Command::Repeat { .. } => "repeat",
            Command::Econ { .. } => "econ",
            Command::Report { .. } => "report",
        }
    }
}

fn out_dir(common: &Common) -> Result<&Path> {
    common.out.as_deref().context("--out is required")
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    config.apply_overrides(common.data.as_deref(), common.seed, common.workers);
    match cli.command {
        Command::Synth { preset, n } => {
            if preset.is_some() || n.is_some() {
                let current = config.synth.take();
                let preset = preset
                    .or_else(|| current.as_ref().map(|s| s.preset.clone()))
                    .context("synth needs a preset")?;
                let n = n.or(current.as_ref().map(|s| s.n)).context("synth needs --n")?;
                config.synth = Some(SynthConfig {
                    preset,
                    n,
                    seed: current.and_then(|s| s.seed),
                });
            }
            if common.seed.is_some() {
                if let Some(s) = config.synth.as_mut() {
                    s.seed = common.seed;
                }
            }
            config.data = None;
            commands::synth(&config, out_dir(common)?)
        }
        Command::Train => commands::train_cmd(&config, out_dir(common)?),
        Command::Search { candidates } => {
            if candidates.is_some() {
                config.search.candidates = candidates;
            }
            commands::search(&config, out_dir(common)?)
        }
        Command::Repeat { count, model } => {
            if count.is_some() {
                config.repeat.count = count;
            }
            commands::repeat(&config, out_dir(common)?, model.as_deref())
        }
        Command::Econ { ensembles } => commands::econ(&config, out_dir(common)?, &ensembles),
        Command::Report { bundle } => {
            let text = commands::report(&bundle, common.out.as_deref())?;
            print!("{text}");
            Ok(())
        }
    }
}

fn error_line(command: &str, message: &str) -> String {
    serde_json::json!({ "error": message, "command": command }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", error_line("args", first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = format!("{e:#}").replace('\n', " ");
            eprintln!("{}", error_line(name, &message));
            ExitCode::FAILURE
        }
    }
}
