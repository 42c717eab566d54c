use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::auc::roc_auc_scores;
use crate::ci::{clopper_pearson, logit_ci_predictive};
use crate::confusion::{confusion, stratified_error_rates, Confusion, StratifyBy, StratumRates};
use crate::prevalence::prevalence_adjusted;
use crate::MetricsError;

/// One tile-level prediction row, mirroring the predictions CSV schema.
#[derive(Debug, Clone, PartialEq)]
pub struct TilePrediction {
    pub tile_id: String,
    pub patient_id: String,
    pub tissue: String,
    pub magnification: String,
    /// Predicted positive-class probability.
    pub score: f64,
    /// 0 = MSS, 1 = MSI-H.
    pub true_label: usize,
}

impl TilePrediction {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !self.score.is_finite() || !(0.0..=1.0).contains(&self.score) {
            return Err(MetricsError::Domain(format!(
                "tile {}: score {} outside [0, 1]",
                self.tile_id, self.score
            )));
        }
        if self.true_label > 1 {
            return Err(MetricsError::Domain(format!(
                "tile {}: label {} is not binary",
                self.tile_id, self.true_label
            )));
        }
        Ok(())
    }
}

/// A point estimate with a confidence interval; `None` marks an undefined
/// rate or interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateWithCi {
    pub value: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl RateWithCi {
    fn undefined() -> Self {
        RateWithCi {
            value: None,
            lo: None,
            hi: None,
        }
    }

    fn of(value: f64, ci: (f64, f64)) -> Self {
        RateWithCi {
            value: Some(value),
            lo: Some(ci.0),
            hi: Some(ci.1),
        }
    }
}

/// Full evaluation report for one set of predictions.
///
/// CI methods: Clopper-Pearson for sensitivity, specificity and the
/// prevalence-adjusted accuracy (the latter at `k = round(acc * n)`);
/// standard logit intervals for the predictive values; Hanley-McNeil for the
/// AUC; the balanced-accuracy interval combines the S and E bounds.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub n: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub threshold: f64,
    pub prevalence: f64,
    pub confidence: f64,
    pub counts: Confusion,
    pub auc: RateWithCi,
    pub sensitivity: RateWithCi,
    pub specificity: RateWithCi,
    pub balanced_accuracy: RateWithCi,
    pub adjusted_accuracy: RateWithCi,
    pub ppv: RateWithCi,
    pub npv: RateWithCi,
    pub per_tissue: Vec<StratumRates>,
    pub per_magnification: Vec<StratumRates>,
}

fn hanley_mcneil_ci(auc: f64, n_pos: usize, n_neg: usize, confidence: f64) -> (f64, f64) {
    let a = auc;
    let q1 = a / (2.0 - a);
    let q2 = 2.0 * a * a / (1.0 + a);
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let var = (a * (1.0 - a) + (np - 1.0) * (q1 - a * a) + (nn - 1.0) * (q2 - a * a)) / (np * nn);
    let z = Normal::new(0.0, 1.0)
        .unwrap()
        .inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let sd = var.max(0.0).sqrt();
    ((a - z * sd).max(0.0), (a + z * sd).min(1.0))
}

/// Build the full report from tile predictions.
pub fn metrics_report(
    preds: &[TilePrediction],
    prevalence: f64,
    threshold: f64,
    confidence: f64,
) -> Result<MetricsReport, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::Domain("no predictions".into()));
    }
    for p in preds {
        p.validate()?;
    }
    let counts = confusion(preds, threshold)?;
    let n_pos = counts.tp + counts.fn_;
    let n_neg = counts.tn + counts.fp;
    let n = n_pos + n_neg;

    let sensitivity = match counts.sensitivity {
        Some(s) => RateWithCi::of(s, clopper_pearson(counts.tp, n_pos, confidence)?),
        None => RateWithCi::undefined(),
    };
    let specificity = match counts.specificity {
        Some(e) => RateWithCi::of(e, clopper_pearson(counts.tn, n_neg, confidence)?),
        None => RateWithCi::undefined(),
    };
    let balanced_accuracy = match (sensitivity.value, specificity.value) {
        (Some(_), Some(_)) => RateWithCi {
            value: counts.balanced_accuracy,
            lo: Some((sensitivity.lo.unwrap() + specificity.lo.unwrap()) / 2.0),
            hi: Some((sensitivity.hi.unwrap() + specificity.hi.unwrap()) / 2.0),
        },
        _ => RateWithCi::undefined(),
    };

    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let labels: Vec<usize> = preds.iter().map(|p| p.true_label).collect();
    let auc = match roc_auc_scores(&scores, &labels) {
        Ok(a) => RateWithCi::of(a, hanley_mcneil_ci(a, n_pos, n_neg, confidence)),
        Err(MetricsError::UndefinedMetric(_)) => RateWithCi::undefined(),
        Err(e) => return Err(e),
    };

    let (adjusted_accuracy, ppv, npv) = match (counts.sensitivity, counts.specificity) {
        (Some(s), Some(e)) => {
            let adj = prevalence_adjusted(s, e, prevalence)?;
            let acc = match adj.accuracy {
                Some(a) => {
                    let k = (a * n as f64).round() as usize;
                    RateWithCi::of(a, clopper_pearson(k.min(n), n, confidence)?)
                }
                None => RateWithCi::undefined(),
            };
            let logit = if s > 0.0 && s < 1.0 && e > 0.0 && e < 1.0 {
                Some(logit_ci_predictive(s, e, prevalence, n_pos, n_neg, confidence)?)
            } else {
                None
            };
            let ppv = match (adj.ppv, logit) {
                (Some(v), Some((ci, _))) => RateWithCi::of(v, ci),
                (Some(v), None) => RateWithCi {
                    value: Some(v),
                    lo: None,
                    hi: None,
                },
                _ => RateWithCi::undefined(),
            };
            let npv = match (adj.npv, logit) {
                (Some(v), Some((_, ci))) => RateWithCi::of(v, ci),
                (Some(v), None) => RateWithCi {
                    value: Some(v),
                    lo: None,
                    hi: None,
                },
                _ => RateWithCi::undefined(),
            };
            (acc, ppv, npv)
        }
        _ => (
            RateWithCi::undefined(),
            RateWithCi::undefined(),
            RateWithCi::undefined(),
        ),
    };

    Ok(MetricsReport {
        n,
        n_pos,
        n_neg,
        threshold,
        prevalence,
        confidence,
        counts,
        auc,
        sensitivity,
        specificity,
        balanced_accuracy,
        adjusted_accuracy,
        ppv,
        npv,
        per_tissue: stratified_error_rates(preds, StratifyBy::Tissue, threshold)?,
        per_magnification: stratified_error_rates(preds, StratifyBy::Magnification, threshold)?,
    })
}

const PRED_HEADER: [&str; 6] = [
    "tile_id",
    "patient_id",
    "tissue",
    "magnification",
    "score",
    "label",
];

pub fn write_predictions_csv(path: &Path, preds: &[TilePrediction]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PRED_HEADER)?;
    for p in preds {
        w.write_record([
            p.tile_id.as_str(),
            p.patient_id.as_str(),
            p.tissue.as_str(),
            p.magnification.as_str(),
            &format!("{:.6}", p.score),
            if p.true_label == 1 { "MSI-H" } else { "MSS" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<TilePrediction>, MetricsError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    if r.headers()?.iter().collect::<Vec<_>>() != PRED_HEADER {
        return Err(MetricsError::Domain(format!(
            "predictions CSV must have columns {PRED_HEADER:?}"
        )));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let get = |i: usize| rec.get(i).unwrap_or("").to_string();
        let score = f64::from_str(&get(4))
            .map_err(|_| MetricsError::Domain(format!("bad score '{}'", get(4))))?;
        let true_label = match get(5).as_str() {
            "MSS" | "0" => 0,
            "MSI-H" | "1" => 1,
            other => return Err(MetricsError::Domain(format!("bad label '{other}'"))),
        };
        let p = TilePrediction {
            tile_id: get(0),
            patient_id: get(1),
            tissue: get(2),
            magnification: get(3),
            score,
            true_label,
        };
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

/// Write the per-tissue and per-magnification tables of a report as one CSV.
pub fn write_strata_csv(path: &Path, report: &MetricsReport) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["group", "stratum", "n", "fpr", "fnr"])?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for (group, rows) in [
        ("tissue", &report.per_tissue),
        ("magnification", &report.per_magnification),
    ] {
        for row in rows {
            w.write_record([
                group,
                row.stratum.as_str(),
                &row.n.to_string(),
                &fmt(row.fpr),
                &fmt(row.fnr),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
