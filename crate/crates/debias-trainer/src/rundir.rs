use std::path::{Path, PathBuf};

use neuralcore::{save_checkpoint, CheckpointMeta, ModelBundle};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use synthcohort::streams::substream_seed;
use synthcohort::TileRecord;

use crate::audit::{audit_biases, write_audit_csv, AuditRow};
use crate::config::TrainConfig;
use crate::data::TileDataset;
use crate::engine::{train_fold, FoldResult, Regime};
use crate::folds::{split_folds, FoldPlan};
use crate::TrainError;

pub const SUMMARY_FILE: &str = "summary.json";
pub const FOLDS_FILE: &str = "folds.json";
pub const CONFIG_FILE: &str = "config.json";
pub const AUDIT_FILE: &str = "audit.csv";
pub const META_FILE: &str = "meta.json";

/// Everything a downstream command needs to know about a finished run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub regime: String,
    pub folds: usize,
    pub bias_names: Vec<String>,
    pub epochs_run: Vec<usize>,
    pub validation_loss: Vec<f64>,
    /// Bit-level hash of the task model (extractor + task head) per fold.
    pub task_params_hash: Vec<String>,
    pub config_hash: String,
}

/// Write a file atomically (write to a sibling temp path, then rename).
pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), TrainError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn checkpoint_path(dir: &Path, fold: usize, tag: &str) -> PathBuf {
    dir.join(format!("checkpoint_fold{fold}_{tag}.bin"))
}

fn task_hash(bundle: &ModelBundle) -> String {
    use std::collections::hash_map::DefaultHasher;
    use std::hash::{Hash, Hasher};
    let mut h = DefaultHasher::new();
    ModelBundle::module_hash(&bundle.fe).hash(&mut h);
    ModelBundle::module_hash(&bundle.msi_head).hash(&mut h);
    format!("{:016x}", h.finish())
}

/// Train all folds of one regime over a manifest and write the run directory:
/// resolved config, fold plan, per-fold histories and checkpoints, a combined
/// bias audit, and a summary. Folds train in parallel, each on its own
/// seeded streams.
pub fn execute_run(
    tiles: &[TileRecord],
    config: &TrainConfig,
    regime: Regime,
    out_dir: &Path,
) -> Result<RunSummary, TrainError> {
    config.validate()?;
    if regime == Regime::BiasAblated && config.bias_names.is_empty() {
        return Err(TrainError::Config(
            "bias-ablated training needs a non-empty bias list".into(),
        ));
    }
    std::fs::create_dir_all(out_dir)?;

    let ds = TileDataset::from_records(tiles, &config.bias_names, &config.model)?;
    let plan = split_folds(&ds.patients(), config.folds, config.seed)?;

    let regime_tag = match regime {
        Regime::Baseline => "baseline",
        Regime::BiasAblated => "ablated",
    };

    let results: Vec<Result<(FoldResult, Vec<AuditRow>), TrainError>> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            let result = train_fold(&ds, fold, i, config, regime)?;
            let audit = audit_biases(
                &result.bundle,
                &ds,
                &config.bias_names,
                &format!("{regime_tag}_fold{i}"),
                config.conditioning_class,
                config.dc_cap,
                substream_seed(config.seed, "audit", i as u64),
                config.batch_size,
            )?;
            Ok((result, audit))
        })
        .collect();

    let mut fold_results = Vec::with_capacity(results.len());
    for r in results {
        fold_results.push(r?);
    }

    let meta = CheckpointMeta {
        bias_names: match regime {
            Regime::Baseline => Vec::new(),
            Regime::BiasAblated => config.bias_names.clone(),
        },
        config_hash: config.content_hash(),
    };

    let mut audit_rows = Vec::new();
    let mut summary = RunSummary {
        regime: regime_tag.to_string(),
        folds: config.folds,
        bias_names: config.bias_names.clone(),
        epochs_run: Vec::new(),
        validation_loss: Vec::new(),
        task_params_hash: Vec::new(),
        config_hash: config.content_hash(),
    };

    for (i, (result, audit)) in fold_results.iter().enumerate() {
        result
            .history
            .write_csv(&out_dir.join(format!("history_fold{i}.csv")))?;
        for snap in &result.snapshots {
            save_checkpoint(
                &checkpoint_path(out_dir, i, &format!("epoch{}", snap.epoch)),
                &snap.bundle,
                &meta,
            )?;
        }
        save_checkpoint(&checkpoint_path(out_dir, i, "final"), &result.bundle, &meta)?;
        audit_rows.extend(audit.iter().cloned());
        summary.epochs_run.push(result.epochs_run);
        summary
            .validation_loss
            .push(result.snapshots.last().map(|s| s.validation_loss).unwrap_or(f64::NAN));
        summary.task_params_hash.push(task_hash(&result.bundle));
    }

    write_audit_csv(&out_dir.join(AUDIT_FILE), &audit_rows)?;
    atomic_write(
        &out_dir.join(FOLDS_FILE),
        serde_json::to_string_pretty(&plan)?.as_bytes(),
    )?;
    #[derive(Serialize)]
    struct StoredConfig<'a> {
        regime: &'a str,
        train: &'a TrainConfig,
    }
    atomic_write(
        &out_dir.join(CONFIG_FILE),
        serde_json::to_string_pretty(&StoredConfig {
            regime: regime_tag,
            train: config,
        })?
        .as_bytes(),
    )?;
    atomic_write(
        &out_dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    // wall-clock metadata lives apart so run outputs stay byte-reproducible
    atomic_write(
        &out_dir.join(META_FILE),
        format!(
            "{{\n  \"written_unix_ms\": {}\n}}\n",
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0)
        )
        .as_bytes(),
    )?;
    Ok(summary)
}

pub fn load_run_summary(dir: &Path) -> Result<RunSummary, TrainError> {
    let text = std::fs::read_to_string(dir.join(SUMMARY_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_fold_plan(dir: &Path) -> Result<FoldPlan, TrainError> {
    let text = std::fs::read_to_string(dir.join(FOLDS_FILE))?;
    Ok(serde_json::from_str(&text)?)
}
