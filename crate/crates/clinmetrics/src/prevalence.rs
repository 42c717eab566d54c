use serde::Serialize;

use crate::MetricsError;

/// Accuracy and predictive values recomputed at an assumed population
/// prevalence; `None` marks a zeroed denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrevalenceAdjusted {
    pub accuracy: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
}

/// accuracy = S*P + E*(1-P); PPV = S*P / (S*P + (1-E)(1-P));
/// NPV = E(1-P) / (E(1-P) + (1-S)P).
pub fn prevalence_adjusted(s: f64, e: f64, p: f64) -> Result<PrevalenceAdjusted, MetricsError> {
    for (name, v) in [("sensitivity", s), ("specificity", e), ("prevalence", p)] {
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            return Err(MetricsError::Domain(format!("{name} {v} outside [0, 1]")));
        }
    }
    let accuracy = Some(s * p + e * (1.0 - p));
    let ppv_denom = s * p + (1.0 - e) * (1.0 - p);
    let npv_denom = e * (1.0 - p) + (1.0 - s) * p;
    Ok(PrevalenceAdjusted {
        accuracy,
        ppv: (ppv_denom > 0.0).then(|| s * p / ppv_denom),
        npv: (npv_denom > 0.0).then(|| e * (1.0 - p) / npv_denom),
    })
}
