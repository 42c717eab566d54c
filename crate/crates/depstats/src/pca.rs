use nalgebra::DMatrix;
use ndarray::Array2;

use crate::StatsError;

/// PCA of a data matrix: orthonormal components (k x p), projected scores
/// (n x k) and the fraction of total variance carried by each component.
#[derive(Debug, Clone)]
pub struct Pca {
    pub components: Array2<f64>,
    pub scores: Array2<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

/// Project `x` (n x p) onto its top `k` principal components.
///
/// Eigendecomposition of the sample covariance matrix, components sorted by
/// decreasing eigenvalue, sign fixed so each component's largest-magnitude
/// entry is positive.
pub fn pca_project(x: &Array2<f64>, k: usize) -> Result<Pca, StatsError> {
    let (n, p) = x.dim();
    if n < 2 {
        return Err(StatsError::Dimension(format!(
            "need at least 2 rows, got {n}"
        )));
    }
    if k == 0 || k > n.min(p) {
        return Err(StatsError::Dimension(format!(
            "k={k} outside [1, min(n={n}, p={p})]"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("pca_project"));
    }

    let col_means: Vec<f64> = (0..p).map(|j| x.column(j).sum() / n as f64).collect();
    let mut centered = x.clone();
    for j in 0..p {
        centered.column_mut(j).mapv_inplace(|v| v - col_means[j]);
    }

    let mut cov = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let mut s = 0.0;
            for i in 0..n {
                s += centered[[i, a]] * centered[[i, b]];
            }
            s /= (n - 1) as f64;
            cov[(a, b)] = s;
            cov[(b, a)] = s;
        }
    }
    let total_variance: f64 = (0..p).map(|a| cov[(a, a)]).sum();

    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut components = Array2::zeros((k, p));
    let mut explained_variance_ratio = Vec::with_capacity(k);
    for (row, &col) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(col);
        // deterministic sign: largest-magnitude entry made positive
        let mut pivot = 0;
        for j in 1..p {
            if v[j].abs() > v[pivot].abs() {
                pivot = j;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..p {
            components[[row, j]] = sign * v[j];
        }
        let lambda = eig.eigenvalues[col].max(0.0);
        explained_variance_ratio.push(if total_variance > 0.0 {
            lambda / total_variance
        } else {
            0.0
        });
    }

    let scores = centered.dot(&components.t());
    Ok(Pca {
        components,
        scores,
        explained_variance_ratio,
    })
}
