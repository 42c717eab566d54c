//! Clinical evaluation metrics for tile and patient level predictions.
//!
//! Rates that a given input cannot define (a stratum without negatives, a
//! prevalence limit that zeroes a denominator) are reported as `None`
//! markers rather than errors; genuinely invalid inputs error.

mod aggregate;
mod auc;
mod ci;
mod confusion;
mod prevalence;
mod report;

pub use aggregate::{aggregate_patient, PatientPrediction};
pub use auc::{roc_auc, roc_auc_scores};
pub use ci::{clopper_pearson, logit_ci_predictive};
pub use confusion::{confusion, stratified_error_rates, Confusion, StratifyBy, StratumRates};
pub use prevalence::{prevalence_adjusted, PrevalenceAdjusted};
pub use report::{
    metrics_report, read_predictions_csv, write_predictions_csv, write_strata_csv, MetricsReport,
    RateWithCi, TilePrediction,
};

use thiserror::Error;

/// Default reporting prevalence for the prevalence-adjusted metrics.
pub const DEFAULT_PREVALENCE: f64 = 0.15;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
