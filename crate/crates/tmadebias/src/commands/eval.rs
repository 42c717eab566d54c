use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use clinmetrics::{
    aggregate_patient, metrics_report, roc_auc_scores, write_predictions_csv, write_strata_csv,
    MetricsReport, TilePrediction,
};
use debias_trainer::{load_fold_plan, predict_scores, TileDataset, TrainConfig};
use depstats::pca_project;
use ndarray::Array2;
use neuralcore::{forward, load_checkpoint};
use rand_like::sample_indices;
use serde::{Deserialize, Serialize};
use synthcohort::load_manifest;

use crate::config::{atomic_write, MetricsConfig};
use crate::errors::CliError;

/// Small deterministic subsampler (Fisher-Yates prefix over a seeded stream).
mod rand_like {
    use synthcohort::streams::substream_rng;

    pub fn sample_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..n).collect();
        if k >= n {
            return idx;
        }
        let mut rng = substream_rng(seed, "pca_subsample", 0);
        idx.shuffle(&mut rng);
        idx.truncate(k);
        idx.sort_unstable();
        idx
    }
}

#[derive(Deserialize)]
struct StoredRunConfig {
    #[allow(dead_code)]
    regime: String,
    train: TrainConfig,
}

#[derive(Serialize)]
struct EvalReport {
    prevalence: f64,
    threshold: f64,
    confidence: f64,
    n_folds: usize,
    tile: MetricsReport,
    patient: MetricsReport,
    per_project_tile: BTreeMap<String, MetricsReport>,
    per_fold_tile_auc: Vec<Option<f64>>,
    per_fold_per_project_tile_auc: BTreeMap<String, Vec<Option<f64>>>,
}

#[derive(Serialize)]
struct PcaPoint {
    tile_id: String,
    x: f64,
    y: f64,
    label: String,
    project: String,
    glass: String,
    patient: String,
}

pub fn run(
    metrics_cfg: &MetricsConfig,
    run_dir: &Path,
    cohort_dir: &Path,
    prevalence_flag: Option<f64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let prevalence = prevalence_flag.unwrap_or(metrics_cfg.prevalence);
    if !(0.0..=1.0).contains(&prevalence) {
        return Err(CliError::config(format!(
            "prevalence {prevalence} outside [0, 1]"
        )));
    }
    let config_path = run_dir.join("config.json");
    if !config_path.exists() {
        return Err(CliError::missing(format!(
            "run config {} not found",
            config_path.display()
        )));
    }
    let stored: StoredRunConfig = serde_json::from_str(&std::fs::read_to_string(&config_path)?)
        .map_err(|e| CliError::config(format!("bad run config: {e}")))?;
    if !run_dir.join(debias_trainer::FOLDS_FILE).exists() {
        return Err(CliError::missing(format!(
            "fold plan {}/folds.json not found",
            run_dir.display()
        )));
    }
    let plan = load_fold_plan(run_dir)?;
    let manifest = load_manifest(cohort_dir)?;
    let all_biases: Vec<String> = debias_trainer::KNOWN_BIASES
        .iter()
        .map(|s| s.to_string())
        .collect();
    let ds = TileDataset::from_records(&manifest.tiles, &all_biases, &stored.train.model)?;

    let eval_dir = out
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| run_dir.join("eval"));
    std::fs::create_dir_all(&eval_dir)?;

    let mut pooled: Vec<TilePrediction> = Vec::new();
    let mut pooled_rows: Vec<usize> = Vec::new();
    let mut pooled_features: Vec<Array2<f64>> = Vec::new();
    let mut per_fold_auc: Vec<Option<f64>> = Vec::new();
    let mut per_fold_preds: Vec<Vec<TilePrediction>> = Vec::new();

    for (i, fold) in plan.folds.iter().enumerate() {
        let ckpt = run_dir.join(format!("checkpoint_fold{i}_final.bin"));
        if !ckpt.exists() {
            return Err(CliError::missing(format!(
                "checkpoint {} not found",
                ckpt.display()
            )));
        }
        let (bundle, _) = load_checkpoint(&ckpt)?;
        let val_idx = ds.indices_for_patients(&fold.validation_patients);
        if val_idx.is_empty() {
            return Err(CliError::runtime(format!(
                "fold {i}: no validation tiles in the cohort"
            )));
        }
        let scores = predict_scores(&bundle, &ds, &val_idx, stored.train.batch_size)?;
        let preds: Vec<TilePrediction> = val_idx
            .iter()
            .zip(scores.iter())
            .map(|(&t, &score)| TilePrediction {
                tile_id: ds.tile_ids[t].clone(),
                patient_id: ds.patient_ids[t].clone(),
                tissue: ds.tissues[t].clone(),
                magnification: ds.magnifications[t].clone(),
                score,
                true_label: ds.labels[t],
            })
            .collect();
        write_predictions_csv(&eval_dir.join(format!("predictions_fold{i}.csv")), &preds)?;

        let labels: Vec<usize> = val_idx.iter().map(|&t| ds.labels[t]).collect();
        per_fold_auc.push(roc_auc_scores(&scores, &labels).ok());

        // features from this fold's model for the diagnostic projection
        let batch = ds.gather(&val_idx, None, None);
        pooled_features.push(forward(&bundle.fe, &batch.inputs)?.output);
        pooled_rows.extend(val_idx.iter().copied());
        per_fold_preds.push(preds.clone());
        pooled.extend(preds);
    }

    let tile_report = metrics_report(
        &pooled,
        prevalence,
        metrics_cfg.threshold,
        metrics_cfg.confidence,
    )?;

    let patients = aggregate_patient(&pooled, metrics_cfg.threshold)?;
    let patient_preds: Vec<TilePrediction> = patients
        .iter()
        .map(|p| TilePrediction {
            tile_id: p.patient_id.clone(),
            patient_id: p.patient_id.clone(),
            tissue: "all".into(),
            magnification: "all".into(),
            score: p.vote_fraction,
            true_label: p.true_label,
        })
        .collect();
    let patient_report = metrics_report(
        &patient_preds,
        prevalence,
        0.5,
        metrics_cfg.confidence,
    )?;

    // per project, pooled over folds plus per-fold AUC columns
    let project_bias = all_biases.iter().position(|n| n == "project").unwrap();
    let project_of_tile: BTreeMap<&str, String> = pooled_rows
        .iter()
        .map(|&t| {
            (
                ds.tile_ids[t].as_str(),
                ds.bias_categories[project_bias][ds.bias_codes[project_bias][t]].clone(),
            )
        })
        .collect();
    let mut per_project: BTreeMap<String, Vec<TilePrediction>> = BTreeMap::new();
    for p in &pooled {
        per_project
            .entry(project_of_tile[p.tile_id.as_str()].clone())
            .or_default()
            .push(p.clone());
    }
    let mut per_project_tile = BTreeMap::new();
    for (project, preds) in &per_project {
        if let Ok(report) = metrics_report(
            preds,
            prevalence,
            metrics_cfg.threshold,
            metrics_cfg.confidence,
        ) {
            per_project_tile.insert(project.clone(), report);
        }
    }
    let mut per_fold_per_project: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for project in per_project.keys() {
        let col: Vec<Option<f64>> = per_fold_preds
            .iter()
            .map(|preds| {
                let subset: Vec<&TilePrediction> = preds
                    .iter()
                    .filter(|p| &project_of_tile[p.tile_id.as_str()] == project)
                    .collect();
                let scores: Vec<f64> = subset.iter().map(|p| p.score).collect();
                let labels: Vec<usize> = subset.iter().map(|p| p.true_label).collect();
                roc_auc_scores(&scores, &labels).ok()
            })
            .collect();
        per_fold_per_project.insert(project.clone(), col);
    }

    let report = EvalReport {
        prevalence,
        threshold: metrics_cfg.threshold,
        confidence: metrics_cfg.confidence,
        n_folds: plan.folds.len(),
        tile: tile_report,
        patient: patient_report,
        per_project_tile,
        per_fold_tile_auc: per_fold_auc,
        per_fold_per_project_tile_auc: per_fold_per_project,
    };
    atomic_write(
        &eval_dir.join("metrics.json"),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    write_strata_csv(&eval_dir.join("strata.csv"), &report.tile)?;

    // 2-component projection of the pooled validation features
    let features = {
        let total: usize = pooled_features.iter().map(|f| f.nrows()).sum();
        let dim = pooled_features[0].ncols();
        let mut m = Array2::zeros((total, dim));
        let mut row = 0;
        for f in &pooled_features {
            for r in 0..f.nrows() {
                for c in 0..dim {
                    m[[row, c]] = f[[r, c]];
                }
                row += 1;
            }
        }
        m
    };
    let keep = sample_indices(features.nrows(), metrics_cfg.pca_cap, stored.train.seed);
    let sub = features.select(ndarray::Axis(0), &keep);
    let pca = pca_project(&sub, 2.min(sub.ncols()))?;
    let glass_bias = all_biases.iter().position(|n| n == "glass").unwrap();
    let points: Vec<PcaPoint> = keep
        .iter()
        .enumerate()
        .map(|(row, &local)| {
            let t = pooled_rows[local];
            PcaPoint {
                tile_id: ds.tile_ids[t].clone(),
                x: pca.scores[[row, 0]],
                y: if pca.scores.ncols() > 1 {
                    pca.scores[[row, 1]]
                } else {
                    0.0
                },
                label: if ds.labels[t] == 1 { "MSI-H" } else { "MSS" }.to_string(),
                project: ds.bias_categories[project_bias][ds.bias_codes[project_bias][t]].clone(),
                glass: ds.bias_categories[glass_bias][ds.bias_codes[glass_bias][t]].clone(),
                patient: ds.patient_ids[t].clone(),
            }
        })
        .collect();
    atomic_write(
        &eval_dir.join("pca.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "explained_variance_ratio": pca.explained_variance_ratio,
            "n_points": points.len(),
            "subsampled": keep.len() < features.nrows(),
            "points": points,
        }))?
        .as_bytes(),
    )?;

    let stdout = std::io::stdout();
    let mut o = stdout.lock();
    let _ = writeln!(
        o,
        "evaluated {} tiles / {} patients; tile AUC {:?}, patient AUC {:?}",
        report.tile.n,
        report.patient.n,
        report.tile.auc.value,
        report.patient.auc.value
    );
    Ok(())
}
