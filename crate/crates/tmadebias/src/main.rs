//! Command-line driver for the end-to-end experiment lifecycle: synthesize a
//! cohort, preprocess spot images, train baseline or bias-ablated models,
//! audit feature/bias dependence, evaluate, and compare runs.

mod commands;
mod config;
mod errors;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::errors::CliError;

#[derive(Parser)]
#[command(
    name = "tmadebias",
    version,
    about = "Adversarial bias-rejecting training on synthetic tissue-microarray cohorts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (manifest + payloads; spot images in
    /// spot-image mode).
    Synth {
        /// Run configuration (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides every seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Normalize, tile and filter a directory of spot images into a manifest.
    Preprocess {
        /// Directory with spots.csv plus the listed PNG images and masks.
        #[arg(long)]
        spots: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Add a second normalization pass against the averaged cohort
        /// profile.
        #[arg(long)]
        cohort_pass: bool,
    },
    /// Train a baseline (default) or bias-ablated (--ablate) model over
    /// patient-grouped folds.
    Train {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Attach the adversarial bias heads and run the three-phase update.
        #[arg(long)]
        ablate: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        folds: Option<usize>,
        /// Adversarial weight on the bias losses.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Measure feature/bias dependence of a checkpoint over a cohort.
    Audit {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score validation folds, aggregate to patients and write metrics,
    /// stratified tables and the diagnostic projection.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
        /// Reporting prevalence for the adjusted metrics.
        #[arg(long)]
        prevalence: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: <run>/eval).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two or more runs (first one is the reference).
    Report {
        /// Run directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { config, out, seed } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            cfg.apply_seed(seed);
            cfg.validate()?;
            commands::synth::run(&cfg, &out)
        }
        Command::Preprocess {
            spots,
            out,
            config,
            cohort_pass,
        } => {
            let cfg = RunConfig::load(config.as_deref())?;
            commands::preprocess::run(&cfg, &spots, &out, cohort_pass)
        }
        Command::Train {
            cohort,
            out,
            config,
            ablate,
            seed,
            folds,
            lambda,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            cfg.apply_seed(seed);
            commands::train::run(
                &cfg,
                &cohort,
                &out,
                &commands::train::TrainArgs {
                    ablate,
                    folds,
                    lambda,
                },
            )
        }
        Command::Audit {
            cohort,
            checkpoint,
            out,
            config,
            seed,
        } => {
            let mut cfg = RunConfig::load(config.as_deref())?;
            cfg.apply_seed(seed);
            commands::audit::run(&cfg, &cohort, &checkpoint, &out)
        }
        Command::Eval {
            run,
            cohort,
            prevalence,
            config,
            out,
        } => {
            let cfg = RunConfig::load(config.as_deref())?;
            commands::eval::run(&cfg.metrics, &run, &cohort, prevalence, out.as_deref())
        }
        Command::Report { runs, out } => commands::report::run(&runs, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            eprintln!(
                "{}",
                serde_json::json!({"error": {"code": 2, "message": e.to_string().lines().next().unwrap_or("usage error")}})
            );
            return ExitCode::from(2);
        }
        Err(e) => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({"error": {"code": e.code, "message": e.message}})
            );
            ExitCode::from(e.code as u8)
        }
    }
}
