use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::MetricsError;

/// Invert a CDF by bisection on [0, 1].
fn bisect_cdf<F: Fn(f64) -> f64>(cdf: F, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact Clopper-Pearson interval for `k` successes in `n` trials via Beta
/// quantiles; `lo = 0` when `k = 0` and `hi = 1` when `k = n`.
pub fn clopper_pearson(k: usize, n: usize, confidence: f64) -> Result<(f64, f64), MetricsError> {
    if n == 0 || k > n {
        return Err(MetricsError::Domain(format!("k={k}, n={n}")));
    }
    if !(0.0 < confidence && confidence < 1.0) {
        return Err(MetricsError::Domain(format!(
            "confidence {confidence} outside (0, 1)"
        )));
    }
    let alpha = 1.0 - confidence;
    let lo = if k == 0 {
        0.0
    } else {
        let beta = Beta::new(k as f64, (n - k + 1) as f64)
            .map_err(|e| MetricsError::Domain(e.to_string()))?;
        bisect_cdf(|x| beta.cdf(x), alpha / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        let beta = Beta::new((k + 1) as f64, (n - k) as f64)
            .map_err(|e| MetricsError::Domain(e.to_string()))?;
        bisect_cdf(|x| beta.cdf(x), 1.0 - alpha / 2.0)
    };
    Ok((lo, hi))
}

/// Standard logit confidence intervals for the prevalence-adjusted predictive
/// values.
///
/// logit(PPV) = ln(P/(1-P)) + ln(S/(1-E)), var = (1-S)/(S n_pos) + E/((1-E) n_neg);
/// logit(NPV) = ln((1-P)/P) + ln(E/(1-S)), var = S/((1-S) n_pos) + (1-E)/(E n_neg).
#[allow(clippy::type_complexity)]
pub fn logit_ci_predictive(
    s: f64,
    e: f64,
    p: f64,
    n_pos: usize,
    n_neg: usize,
    confidence: f64,
) -> Result<((f64, f64), (f64, f64)), MetricsError> {
    if !(0.0 < s && s < 1.0) || !(0.0 < e && e < 1.0) {
        return Err(MetricsError::DegenerateVariance(format!(
            "S={s}, E={e}: logit variance needs S, E strictly inside (0, 1)"
        )));
    }
    if !(0.0 < p && p < 1.0) {
        return Err(MetricsError::Domain(format!("prevalence {p} outside (0, 1)")));
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::Domain("n_pos and n_neg must be positive".into()));
    }
    if !(0.0 < confidence && confidence < 1.0) {
        return Err(MetricsError::Domain(format!(
            "confidence {confidence} outside (0, 1)"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let z = normal.inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let inv_logit = |x: f64| 1.0 / (1.0 + (-x).exp());

    let logit_ppv = (p / (1.0 - p)).ln() + (s / (1.0 - e)).ln();
    let var_ppv = (1.0 - s) / (s * n_pos as f64) + e / ((1.0 - e) * n_neg as f64);
    let sd = var_ppv.sqrt();
    let ppv_ci = (inv_logit(logit_ppv - z * sd), inv_logit(logit_ppv + z * sd));

    let logit_npv = ((1.0 - p) / p).ln() + (e / (1.0 - s)).ln();
    let var_npv = s / ((1.0 - s) * n_pos as f64) + (1.0 - e) / (e * n_neg as f64);
    let sd = var_npv.sqrt();
    let npv_ci = (inv_logit(logit_npv - z * sd), inv_logit(logit_npv + z * sd));

    Ok((ppv_ci, npv_ci))
}
