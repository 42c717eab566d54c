use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use debias_trainer::{load_run_summary, read_audit_csv};
use serde::Serialize;
use serde_json::Value;

use crate::config::atomic_write;
use crate::errors::CliError;

#[derive(Serialize, Clone)]
struct BiasDcSummary {
    per_fold: Vec<Option<f64>>,
    mean: Option<f64>,
    sd: Option<f64>,
}

#[derive(Serialize)]
struct RunEntry {
    dir: String,
    regime: String,
    folds: usize,
    conditioned_dc: BTreeMap<String, BiasDcSummary>,
    eval: Option<Value>,
}

#[derive(Serialize)]
struct DcComparison {
    bias: String,
    reference_mean: Option<f64>,
    run_mean: Option<f64>,
    delta: Option<f64>,
    ratio: Option<f64>,
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        Some(
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt(),
        )
    } else {
        Some(0.0)
    };
    (Some(mean), sd)
}

fn load_entry(dir: &Path) -> Result<RunEntry, CliError> {
    let summary = load_run_summary(dir).map_err(|e| match e {
        debias_trainer::TrainError::Io(ref io)
            if io.kind() == std::io::ErrorKind::NotFound =>
        {
            CliError::missing(format!("{} has no summary.json", dir.display()))
        }
        other => CliError::from(other),
    })?;
    let audit_path = dir.join(debias_trainer::AUDIT_FILE);
    if !audit_path.exists() {
        return Err(CliError::missing(format!(
            "{} has no audit.csv",
            dir.display()
        )));
    }
    let audit = read_audit_csv(&audit_path)?;

    let mut conditioned_dc: BTreeMap<String, BiasDcSummary> = BTreeMap::new();
    for bias in &summary.bias_names {
        let mut per_fold: Vec<Option<f64>> = vec![None; summary.folds];
        for row in audit.iter().filter(|r| {
            r.variable == *bias && r.subgroup.starts_with("class=")
        }) {
            if let Some(fold_str) = row.model.rsplit("fold").next() {
                if let Ok(fold) = fold_str.parse::<usize>() {
                    if fold < per_fold.len() {
                        per_fold[fold] = row.dc;
                    }
                }
            }
        }
        let present: Vec<f64> = per_fold.iter().flatten().copied().collect();
        let (mean, sd) = mean_sd(&present);
        conditioned_dc.insert(
            bias.clone(),
            BiasDcSummary { per_fold, mean, sd },
        );
    }

    let eval_path = dir.join("eval/metrics.json");
    let eval = if eval_path.exists() {
        Some(serde_json::from_str(&std::fs::read_to_string(&eval_path)?)?)
    } else {
        None
    };

    Ok(RunEntry {
        dir: dir.display().to_string(),
        regime: summary.regime,
        folds: summary.folds,
        conditioned_dc,
        eval,
    })
}

/// Paired comparison of two or more runs: per-bias conditioned-dc summaries
/// (mean and sd over folds) and deltas against the first run.
pub fn run(run_dirs: &[PathBuf], out: &Path) -> Result<(), CliError> {
    if run_dirs.len() < 2 {
        return Err(CliError::config(format!(
            "report needs at least 2 run directories, got {}",
            run_dirs.len()
        )));
    }
    let entries: Vec<RunEntry> = run_dirs
        .iter()
        .map(|d| load_entry(d))
        .collect::<Result<_, _>>()?;

    let reference = &entries[0];
    let mut comparisons: Vec<Vec<DcComparison>> = Vec::new();
    for entry in &entries[1..] {
        let mut per_bias = Vec::new();
        for (bias, summary) in &entry.conditioned_dc {
            let ref_mean = reference
                .conditioned_dc
                .get(bias)
                .and_then(|s| s.mean);
            let delta = match (ref_mean, summary.mean) {
                (Some(a), Some(b)) => Some(b - a),
                _ => None,
            };
            let ratio = match (ref_mean, summary.mean) {
                (Some(a), Some(b)) if a > 0.0 => Some(b / a),
                _ => None,
            };
            per_bias.push(DcComparison {
                bias: bias.clone(),
                reference_mean: ref_mean,
                run_mean: summary.mean,
                delta,
                ratio,
            });
        }
        comparisons.push(per_bias);
    }

    let doc = serde_json::json!({
        "reference": reference.dir,
        "runs": entries,
        "dc_vs_reference": comparisons,
    });
    atomic_write(out, serde_json::to_string_pretty(&doc)?.as_bytes())?;

    let stdout = std::io::stdout();
    let mut o = stdout.lock();
    let _ = writeln!(
        o,
        "compared {} runs against {}; wrote {}",
        run_dirs.len(),
        run_dirs[0].display(),
        out.display()
    );
    Ok(())
}
