use std::io::Write;
use std::path::Path;

use debias_trainer::{audit_biases, write_audit_csv, TileDataset};
use neuralcore::load_checkpoint;
use synthcohort::load_manifest;

use crate::config::RunConfig;
use crate::errors::CliError;

pub fn run(
    config: &RunConfig,
    cohort_dir: &Path,
    checkpoint: &Path,
    out: &Path,
) -> Result<(), CliError> {
    if !checkpoint.exists() {
        return Err(CliError::missing(format!(
            "checkpoint {} not found",
            checkpoint.display()
        )));
    }
    if !cohort_dir.join("manifest.csv").exists() {
        return Err(CliError::missing(format!(
            "cohort manifest {}/manifest.csv not found",
            cohort_dir.display()
        )));
    }
    let (bundle, _meta) = load_checkpoint(checkpoint)?;
    let manifest = load_manifest(cohort_dir)?;
    let ds = TileDataset::from_records(&manifest.tiles, &config.train.bias_names, &config.train.model)?;

    let tag = checkpoint
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("checkpoint")
        .to_string();
    let rows = audit_biases(
        &bundle,
        &ds,
        &config.train.bias_names,
        &tag,
        config.train.conditioning_class,
        config.train.dc_cap,
        config.train.seed,
        config.train.batch_size,
    )?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_audit_csv(out, &rows)?;

    let stdout = std::io::stdout();
    let mut o = stdout.lock();
    let _ = writeln!(o, "audited {} rows into {}", rows.len(), out.display());
    Ok(())
}
