use std::collections::BTreeMap;

use serde::Serialize;

use crate::report::TilePrediction;
use crate::MetricsError;

/// Confusion counts and the rates they define; a rate whose class is absent
/// is `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub balanced_accuracy: Option<f64>,
}

/// Threshold tile scores (positive when `score >= threshold`) and count the
/// confusion matrix.
pub fn confusion(preds: &[TilePrediction], threshold: f64) -> Result<Confusion, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::Domain("no predictions".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for p in preds {
        let positive = p.score >= threshold;
        match (p.true_label, positive) {
            (1, true) => tp += 1,
            (1, false) => fn_ += 1,
            (0, true) => fp += 1,
            (0, false) => tn += 1,
            (other, _) => {
                return Err(MetricsError::Domain(format!(
                    "label {other} is not binary"
                )))
            }
        }
    }
    let sensitivity = (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64);
    let specificity = (tn + fp > 0).then(|| tn as f64 / (tn + fp) as f64);
    let balanced_accuracy = match (sensitivity, specificity) {
        (Some(s), Some(e)) => Some((s + e) / 2.0),
        _ => None,
    };
    Ok(Confusion {
        tp,
        fp,
        tn,
        fn_,
        sensitivity,
        specificity,
        balanced_accuracy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StratifyBy {
    Tissue,
    Magnification,
}

/// Per-stratum false positive / false negative rates; a rate without its
/// denominator class is `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumRates {
    pub stratum: String,
    pub n: usize,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
}

pub fn stratified_error_rates(
    preds: &[TilePrediction],
    by: StratifyBy,
    threshold: f64,
) -> Result<Vec<StratumRates>, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::Domain("no predictions".into()));
    }
    let mut groups: BTreeMap<&str, Vec<&TilePrediction>> = BTreeMap::new();
    for p in preds {
        let key = match by {
            StratifyBy::Tissue => p.tissue.as_str(),
            StratifyBy::Magnification => p.magnification.as_str(),
        };
        groups.entry(key).or_default().push(p);
    }
    let mut out = Vec::with_capacity(groups.len());
    for (stratum, rows) in groups {
        let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
        for p in &rows {
            let positive = p.score >= threshold;
            match (p.true_label, positive) {
                (1, true) => tp += 1,
                (1, false) => fn_ += 1,
                (0, true) => fp += 1,
                _ => tn += 1,
            }
        }
        out.push(StratumRates {
            stratum: stratum.to_string(),
            n: rows.len(),
            fpr: (fp + tn > 0).then(|| fp as f64 / (fp + tn) as f64),
            fnr: (fn_ + tp > 0).then(|| fn_ as f64 / (fn_ + tp) as f64),
        });
    }
    Ok(out)
}
