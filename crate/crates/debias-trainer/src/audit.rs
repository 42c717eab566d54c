use std::path::Path;

use depstats::categorical_distance_correlation_sq;
use ndarray::Array2;
use neuralcore::{forward, ModelBundle};
use serde::{Deserialize, Serialize};

use crate::data::TileDataset;
use crate::TrainError;

/// One audit measurement: the dependence of the learned features with the
/// task or one bias, inside one subgroup. `dc = None` marks a subgroup too
/// small to compute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub model: String,
    pub subgroup: String,
    pub variable: String,
    pub dc: Option<f64>,
    pub n: usize,
}

#[allow(clippy::too_many_arguments)]
fn dc_row(
    model: &str,
    subgroup: &str,
    variable: &str,
    features: &Array2<f64>,
    codes: &[usize],
    rows: &[usize],
    cap: usize,
    seed: u64,
) -> Result<AuditRow, TrainError> {
    if rows.len() < 2 {
        return Ok(AuditRow {
            model: model.to_string(),
            subgroup: subgroup.to_string(),
            variable: variable.to_string(),
            dc: None,
            n: rows.len(),
        });
    }
    let f = features.select(ndarray::Axis(0), rows);
    let sub_codes: Vec<usize> = rows.iter().map(|&i| codes[i]).collect();
    let dc = categorical_distance_correlation_sq(&f, &sub_codes, cap, seed)?;
    Ok(AuditRow {
        model: model.to_string(),
        subgroup: subgroup.to_string(),
        variable: variable.to_string(),
        dc: Some(dc.value),
        n: dc.n,
    })
}

/// Extract features for every tile and measure squared distance correlations
/// with the task and each candidate bias: overall, conditioned on each
/// category of every other candidate (one level of subgrouping), and
/// conditioned on the adversarial class.
#[allow(clippy::too_many_arguments)]
pub fn audit_biases(
    bundle: &ModelBundle,
    ds: &TileDataset,
    candidate_biases: &[String],
    model_tag: &str,
    conditioning_class: synthcohort::ClassLabel,
    cap: usize,
    seed: u64,
    batch_size: usize,
) -> Result<Vec<AuditRow>, TrainError> {
    for name in candidate_biases {
        if !ds.bias_names.contains(name) {
            return Err(TrainError::Config(format!(
                "bias '{name}' not materialized in the dataset"
            )));
        }
    }
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut features = Array2::zeros((ds.len(), bundle.feature_dim()));
    for chunk in all.chunks(batch_size.max(1)) {
        let batch = ds.gather(chunk, None, None);
        let f = forward(&bundle.fe, &batch.inputs)?.output;
        for (row, &i) in chunk.iter().enumerate() {
            for c in 0..f.ncols() {
                features[[i, c]] = f[[row, c]];
            }
        }
    }

    let bias_idx = |name: &String| ds.bias_names.iter().position(|n| n == name).unwrap();
    let mut rows = Vec::new();

    // overall
    rows.push(dc_row(
        model_tag, "all", "task", &features, &ds.labels, &all, cap, seed,
    )?);
    for name in candidate_biases {
        let b = bias_idx(name);
        rows.push(dc_row(
            model_tag,
            "all",
            name,
            &features,
            &ds.bias_codes[b],
            &all,
            cap,
            seed,
        )?);
    }

    // one level of subgrouping: condition on each category of every other candidate
    for grouper in candidate_biases {
        let g = bias_idx(grouper);
        for (cat_code, cat_name) in ds.bias_categories[g].iter().enumerate() {
            let members: Vec<usize> = all
                .iter()
                .copied()
                .filter(|&i| ds.bias_codes[g][i] == cat_code)
                .collect();
            let subgroup = format!("{grouper}={cat_name}");
            rows.push(dc_row(
                model_tag, &subgroup, "task", &features, &ds.labels, &members, cap, seed,
            )?);
            for other in candidate_biases {
                if other == grouper {
                    continue;
                }
                let b = bias_idx(other);
                rows.push(dc_row(
                    model_tag,
                    &subgroup,
                    other,
                    &features,
                    &ds.bias_codes[b],
                    &members,
                    cap,
                    seed,
                )?);
            }
        }
    }

    // conditioned on the adversarial class
    let rho = conditioning_class.index();
    let rho_rows: Vec<usize> = all.iter().copied().filter(|&i| ds.labels[i] == rho).collect();
    let subgroup = format!("class={conditioning_class}");
    for name in candidate_biases {
        let b = bias_idx(name);
        rows.push(dc_row(
            model_tag,
            &subgroup,
            name,
            &features,
            &ds.bias_codes[b],
            &rho_rows,
            cap,
            seed,
        )?);
    }
    Ok(rows)
}

/// `audit.csv` schema: model,subgroup,variable,dc,n (dc empty when not
/// computable).
pub fn write_audit_csv(path: &Path, rows: &[AuditRow]) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "subgroup", "variable", "dc", "n"])?;
    for r in rows {
        w.write_record([
            r.model.as_str(),
            r.subgroup.as_str(),
            r.variable.as_str(),
            &r.dc.map(|v| format!("{v:.8}")).unwrap_or_default(),
            &r.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read back an audit CSV.
pub fn read_audit_csv(path: &Path) -> Result<Vec<AuditRow>, TrainError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let dc_field = rec.get(3).unwrap_or("");
        out.push(AuditRow {
            model: rec.get(0).unwrap_or("").to_string(),
            subgroup: rec.get(1).unwrap_or("").to_string(),
            variable: rec.get(2).unwrap_or("").to_string(),
            dc: if dc_field.is_empty() {
                None
            } else {
                Some(dc_field.parse().map_err(|_| {
                    TrainError::Config(format!("bad dc value '{dc_field}' in audit csv"))
                })?)
            },
            n: rec
                .get(4)
                .unwrap_or("0")
                .parse()
                .map_err(|_| TrainError::Config("bad n in audit csv".into()))?,
        });
    }
    Ok(out)
}
