use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use huffval::config::{AnchorName, Overrides, RunConfig};
use huffval::pipeline::{self, Status};

/// Huff-model fitting over card-transaction data.
#[derive(Debug, Parser)]
#[command(name = "huffval", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (also the default input directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Restrict to a merchant category; repeatable.
    #[arg(long = "category", global = true)]
    categories: Vec<String>,
    /// Restrict fitting to a district; repeatable.
    #[arg(long = "district", global = true)]
    districts: Vec<String>,
    /// Minimum transactions for a customer to be kept.
    #[arg(long, global = true)]
    min_transactions: Option<usize>,
    /// Customer location used for distances.
    #[arg(long, global = true, value_enum)]
    anchor: Option<AnchorName>,
    /// Lower bound on distances, in km.
    #[arg(long, global = true)]
    floor_km: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate inputs and write the dataset summary.
    Ingest,
    /// Fit the choice model in every (district, category) cell.
    Fit,
    /// Compute district indicators and mobility matrices.
    Indicators,
    /// Regress fit scores on district indicators.
    Regress,
    /// Generate a synthetic city with known parameters.
    Synth,
    /// Distance histograms per cell.
    Distances,
    /// Render summary tables from existing outputs.
    Report,
}

fn run(cli: Cli) -> huffval::Result<Status> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply(Overrides {
        out: cli.out,
        seed: cli.seed,
        workers: cli.workers,
        categories: cli.categories,
        districts: cli.districts,
        min_transactions: cli.min_transactions,
        anchor: cli.anchor,
        floor_km: cli.floor_km,
    });
    match cli.command {
        Command::Ingest => pipeline::cmd_ingest(&config),
        Command::Fit => pipeline::cmd_fit(&config),
        Command::Indicators => pipeline::cmd_indicators(&config),
        Command::Regress => pipeline::cmd_regress(&config),
        Command::Synth => pipeline::cmd_synth(&config),
        Command::Distances => pipeline::cmd_distances(&config),
        Command::Report => pipeline::cmd_report(&config),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(status) => {
            match &status {
                Status::Success => {}
                Status::ValidationFailed(msg) | Status::DegenerateThreshold(msg) => eprintln!("error: {msg}"),
            }
            ExitCode::from(status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
