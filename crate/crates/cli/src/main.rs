#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! `beamcal` command-line driver.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use beamcal::presets::PRESET_NAMES;
use beamcal::CalError;
use clap::{Parser, Subcommand};

use crate::commands::{calibrate, coop, evaluate, report, sweep, synth};

/// Exit status for invalid configuration or usage, matching clap's own.
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "beamcal", version, about = "Beam codebook calibration experiments")]
pub struct Cli {
    /// Seed for scenario synthesis, solvers and data splits.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory. Defaults to $BEAMCAL_DATA_DIR, then the current directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Scenario preset; overrides any scenario in the config file.
    #[arg(long, global = true, value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
    pub preset: Option<String>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a measurement set from a scenario.
    Synth(synth::Args),
    /// Fit one calibration model to a measurement set.
    Calibrate(calibrate::Args),
    /// Score calibration states against the scenario truth.
    Evaluate(evaluate::Args),
    /// Cooperative calibration across several UEs.
    Coop(coop::Args),
    /// Vary one setting and record the outcome of each run.
    Sweep(sweep::Args),
    /// Print a saved metric table.
    Report(report::Args),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CalError>() {
            return match e {
                CalError::Config(_) => EXIT_CONFIG,
                CalError::Io(_)
                | CalError::Json(_)
                | CalError::Format(_)
                | CalError::Checksum { .. }
                | CalError::Version(_) => EXIT_IO,
                CalError::Domain(_)
                | CalError::DimensionMismatch { .. }
                | CalError::Geometry(_)
                | CalError::Numeric(_)
                | CalError::Diverged { .. }
                | CalError::AngleFailure { .. } => EXIT_NUMERIC,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
