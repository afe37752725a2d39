//! `fracfit`: simulate, fit, compare and validate fractional-order
//! step-response models from the command line.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "fracfit",
    version,
    about = "Fractional-order step-response identification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset CSV file or a directory of them.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the optimizer and for synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Named parameter set (dragonskin20, dragonskin-fxpro).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Simulation grid step in seconds.
    #[arg(long, global = true)]
    grid_step: Option<f64>,
    /// Simulation horizon in seconds.
    #[arg(long, global = true)]
    horizon: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Step response of one model: trace CSVs and a summary JSON.
    Simulate,
    /// Identify the fractional model from dataset CSVs.
    Fit,
    /// RMS error of the fractional and baseline models against averaged data.
    Compare,
    /// Noisy synthetic trials of a fractional model.
    Synth,
    /// Fit quality as a function of the number of datasets.
    Validate,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let flags = Overrides {
        data: cli.data.clone(),
        out: cli.out.clone(),
        seed: cli.seed,
        preset: cli.preset.clone(),
        grid_step: cli.grid_step,
        horizon: cli.horizon,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &flags)?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Fit => commands::fit(&cfg),
        Command::Compare => commands::compare(&cfg),
        Command::Synth => commands::synth(&cfg),
        Command::Validate => commands::validate(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let line = first.lines().next().unwrap_or("invalid arguments");
            eprintln!("{line}");
            return ExitCode::from(error::EXIT_CONFIG as u8);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FRACFIT_LOG", "warn")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
