use crate::report::TilePrediction;
use crate::MetricsError;

/// ROC AUC as the Mann-Whitney statistic with tie correction (tied pairs
/// count one half).
pub fn roc_auc_scores(scores: &[f64], labels: &[usize]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::Domain(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricsError::Domain("non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::UndefinedMetric(format!(
            "AUC needs both classes, got {n_pos} positives / {n_neg} negatives"
        )));
    }

    // average ranks with ties
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }

    let rank_sum_pos: f64 = labels
        .iter()
        .zip(ranks.iter())
        .filter(|(&l, _)| l == 1)
        .map(|(_, &r)| r)
        .sum();
    let np = n_pos as f64;
    let nn = n_neg as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

/// ROC AUC over tile predictions.
pub fn roc_auc(preds: &[TilePrediction]) -> Result<f64, MetricsError> {
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let labels: Vec<usize> = preds.iter().map(|p| p.true_label).collect();
    roc_auc_scores(&scores, &labels)
}
