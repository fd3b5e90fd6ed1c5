//! `pikan`: config-driven pipeline for physics-informed KAN PointNet
//! experiments — dataset generation, training, evaluation, and parameter
//! counting.

mod commands;
mod config;
mod plot;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "pikan",
    about = "Physics-informed KAN PointNet pipeline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the dataset directory (clouds, sensors, optional truth).
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the configured network on the generated dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit error tables, surface profiles, and plots.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Trained checkpoint; omit to score the direct-field adapter
        /// (requires manufactured truth).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the trainable-parameter count with a per-layer breakdown.
    CountParams {
        #[arg(long)]
        config: PathBuf,
    },
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("PIKAN_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("ignoring invalid PIKAN_THREADS value {v:?}"),
        }
    }
}

fn run() -> pikan_core::Result<()> {
    init_thread_pool();
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            commands::cmd_generate(&cfg, &config, out.as_deref())
        }
        Command::Train { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            commands::cmd_train(&cfg, &config, out.as_deref())
        }
        Command::Evaluate {
            config,
            checkpoint,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            commands::cmd_evaluate(&cfg, &config, checkpoint.as_deref(), out.as_deref())
        }
        Command::CountParams { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            commands::cmd_count_params(&cfg)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
