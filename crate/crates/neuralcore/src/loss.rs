use ndarray::Array2;

use crate::NetError;

const PROB_FLOOR: f64 = 1e-12;

/// Cross-entropy over softmax logits, summed over the batch.
///
/// Returns the loss and dLoss/dlogits (`softmax - onehot`). Probabilities are
/// clamped to `1e-12` before the log.
pub fn xent_loss_grad(
    logits: &Array2<f64>,
    y: &[usize],
) -> Result<(f64, Array2<f64>), NetError> {
    let (n, m) = logits.dim();
    if m < 2 {
        return Err(NetError::Dimension(format!(
            "need at least 2 classes, got {m}"
        )));
    }
    if y.len() != n {
        return Err(NetError::Dimension(format!(
            "{n} logit rows vs {} labels",
            y.len()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(NetError::NonFinite("logits"));
    }
    for &label in y {
        if label >= m {
            return Err(NetError::LabelRange { label, classes: m });
        }
    }

    let mut grad = Array2::zeros((n, m));
    let mut loss = 0.0;
    for i in 0..n {
        let row_max = logits.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for j in 0..m {
            denom += (logits[[i, j]] - row_max).exp();
        }
        for j in 0..m {
            let p = (logits[[i, j]] - row_max).exp() / denom;
            grad[[i, j]] = p;
            if j == y[i] {
                loss -= p.max(PROB_FLOOR).ln();
            }
        }
        grad[[i, y[i]]] -= 1.0;
    }
    Ok((loss, grad))
}

/// Negative mean squared Pearson correlation between the columns of the
/// one-hot bias matrix and the head predictions.
///
/// `loss = -(1/K) * sum_k corr^2(b_k, b_hat_k)`; columns where either side has
/// zero variance contribute 0 with zero gradient. Returns the loss and its
/// exact gradient with respect to `b_hat`.
pub fn corr_loss_grad(
    b_onehot: &Array2<f64>,
    b_hat: &Array2<f64>,
) -> Result<(f64, Array2<f64>), NetError> {
    if b_onehot.dim() != b_hat.dim() {
        return Err(NetError::Dimension(format!(
            "bias matrix {:?} vs predictions {:?}",
            b_onehot.dim(),
            b_hat.dim()
        )));
    }
    let (n, k) = b_onehot.dim();
    if n < 2 {
        return Err(NetError::Dimension(format!(
            "need at least 2 rows, got {n}"
        )));
    }
    if b_onehot.iter().chain(b_hat.iter()).any(|v| !v.is_finite()) {
        return Err(NetError::NonFinite("corr_loss_grad"));
    }

    let kf = k as f64;
    let nf = n as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros((n, k));
    for col in 0..k {
        let mu = b_onehot.column(col).sum() / nf;
        let mv = b_hat.column(col).sum() / nf;
        let mut suv = 0.0;
        let mut suu = 0.0;
        let mut svv = 0.0;
        for i in 0..n {
            let du = b_onehot[[i, col]] - mu;
            let dv = b_hat[[i, col]] - mv;
            suv += du * dv;
            suu += du * du;
            svv += dv * dv;
        }
        if suu <= 0.0 || svv <= 0.0 {
            continue;
        }
        let r2 = (suv * suv) / (suu * svv);
        loss -= r2 / kf;
        // d r^2 / d v_i = 2*suv/(suu*svv) * du_i - 2*suv^2/(suu*svv^2) * dv_i
        let cu = 2.0 * suv / (suu * svv);
        let cv = 2.0 * suv * suv / (suu * svv * svv);
        for i in 0..n {
            let du = b_onehot[[i, col]] - mu;
            let dv = b_hat[[i, col]] - mv;
            grad[[i, col]] = -(cu * du - cv * dv) / kf;
        }
    }
    Ok((loss, grad))
}
