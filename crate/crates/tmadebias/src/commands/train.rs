use std::io::Write;
use std::path::Path;

use debias_trainer::{execute_run, Regime};
use synthcohort::load_manifest;

use crate::config::RunConfig;
use crate::errors::CliError;

pub struct TrainArgs {
    pub ablate: bool,
    pub folds: Option<usize>,
    pub lambda: Option<f64>,
}

pub fn run(
    config: &RunConfig,
    cohort_dir: &Path,
    out: &Path,
    args: &TrainArgs,
) -> Result<(), CliError> {
    let mut train = config.train.clone();
    if let Some(folds) = args.folds {
        train.folds = folds;
    }
    if let Some(lambda) = args.lambda {
        train.lambda = lambda;
    }
    if args.ablate && train.bias_names.is_empty() {
        return Err(CliError::config(
            "--ablate requires a non-empty train.bias_names list",
        ));
    }
    train.validate()?;

    if !cohort_dir.join("manifest.csv").exists() {
        return Err(CliError::missing(format!(
            "cohort manifest {}/manifest.csv not found",
            cohort_dir.display()
        )));
    }
    let manifest = load_manifest(cohort_dir)?;
    let regime = if args.ablate {
        Regime::BiasAblated
    } else {
        Regime::Baseline
    };
    let summary = execute_run(&manifest.tiles, &train, regime, out)?;

    let stdout = std::io::stdout();
    let mut o = stdout.lock();
    let _ = writeln!(
        o,
        "trained {} regime: {} folds, epochs run {:?}, validation loss {:?}",
        summary.regime, summary.folds, summary.epochs_run, summary.validation_loss
    );
    Ok(())
}
