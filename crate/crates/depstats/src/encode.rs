use ndarray::Array2;

use crate::StatsError;

/// One-hot encode `labels` into an n x k matrix with exactly one 1 per row.
pub fn one_hot(labels: &[usize], k: usize) -> Result<Array2<f64>, StatsError> {
    let mut out = Array2::zeros((labels.len(), k));
    for (i, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(StatsError::LabelRange {
                label,
                categories: k,
            });
        }
        out[[i, label]] = 1.0;
    }
    Ok(out)
}
