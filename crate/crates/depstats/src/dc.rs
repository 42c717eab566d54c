use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::StatsError;

/// A squared distance correlation together with the sample count it was
/// computed from (relevant when the input was subsampled).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcValue {
    pub value: f64,
    pub n: usize,
}

fn check_finite(m: &Array2<f64>, what: &'static str) -> Result<(), StatsError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(what));
    }
    Ok(())
}

/// Pairwise Euclidean distance matrix between the rows of `m`.
fn distance_matrix(m: &Array2<f64>) -> Array2<f64> {
    let n = m.nrows();
    let mut d = Array2::zeros((n, n));
    for j in 0..n {
        for k in (j + 1)..n {
            let mut s = 0.0;
            for c in 0..m.ncols() {
                let diff = m[[j, c]] - m[[k, c]];
                s += diff * diff;
            }
            let dist = s.sqrt();
            d[[j, k]] = dist;
            d[[k, j]] = dist;
        }
    }
    d
}

/// Double-center in place: d_jk - row mean - col mean + grand mean.
fn double_center(d: &mut Array2<f64>) {
    let n = d.nrows();
    let row_means: Vec<f64> = (0..n).map(|j| d.row(j).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for j in 0..n {
        for k in 0..n {
            // distance matrices are symmetric, so col mean k == row mean k
            d[[j, k]] += grand - row_means[j] - row_means[k];
        }
    }
}

/// Squared distance correlation between the rows of `x` (n x p) and `y` (n x q).
///
/// Computes pairwise Euclidean distance matrices, double-centers them, and
/// returns dCov^2 / sqrt(dVar_x * dVar_y) clamped to [0, 1]. Zero by
/// convention when either distance variance vanishes (constant input).
pub fn distance_correlation_sq(
    x: &Array2<f64>,
    y: &Array2<f64>,
) -> Result<DcValue, StatsError> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(StatsError::Dimension(format!(
            "row counts differ: {} vs {}",
            n,
            y.nrows()
        )));
    }
    if n < 2 {
        return Err(StatsError::Dimension(format!(
            "need at least 2 rows, got {n}"
        )));
    }
    check_finite(x, "distance_correlation_sq x")?;
    check_finite(y, "distance_correlation_sq y")?;

    let mut a = distance_matrix(x);
    let mut b = distance_matrix(y);
    double_center(&mut a);
    double_center(&mut b);

    let n2 = (n * n) as f64;
    let mut dcov2 = 0.0;
    let mut dvar_x = 0.0;
    let mut dvar_y = 0.0;
    for (aj, bj) in a.iter().zip(b.iter()) {
        dcov2 += aj * bj;
        dvar_x += aj * aj;
        dvar_y += bj * bj;
    }
    dcov2 /= n2;
    dvar_x /= n2;
    dvar_y /= n2;

    let value = if dvar_x <= 0.0 || dvar_y <= 0.0 {
        0.0
    } else {
        (dcov2 / (dvar_x * dvar_y).sqrt()).clamp(0.0, 1.0)
    };
    Ok(DcValue { value, n })
}

/// Like [`distance_correlation_sq`] but uniformly subsamples rows (without
/// replacement, seeded) when `n > cap`, keeping the O(n^2) matrices bounded.
pub fn distance_correlation_sq_capped(
    x: &Array2<f64>,
    y: &Array2<f64>,
    cap: usize,
    seed: u64,
) -> Result<DcValue, StatsError> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(StatsError::Dimension(format!(
            "row counts differ: {} vs {}",
            n,
            y.nrows()
        )));
    }
    if cap < 2 {
        return Err(StatsError::Dimension("cap must be at least 2".into()));
    }
    if n <= cap {
        return distance_correlation_sq(x, y);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, cap).into_vec();
    idx.sort_unstable();
    let xs = x.select(ndarray::Axis(0), &idx);
    let ys = y.select(ndarray::Axis(0), &idx);
    distance_correlation_sq(&xs, &ys)
}

/// Squared distance correlation between feature rows and a categorical
/// variable under the one-hot Euclidean metric (0 within a category, sqrt(2)
/// across), without materializing the one-hot matrix. Identical to
/// [`distance_correlation_sq`] on `one_hot(codes, k)` but O(n^2) instead of
/// O(n^2 k) on the categorical side.
pub fn categorical_distance_correlation_sq(
    x: &Array2<f64>,
    codes: &[usize],
    cap: usize,
    seed: u64,
) -> Result<DcValue, StatsError> {
    let n = x.nrows();
    if codes.len() != n {
        return Err(StatsError::Dimension(format!(
            "{} rows vs {} codes",
            n,
            codes.len()
        )));
    }
    if cap < 2 {
        return Err(StatsError::Dimension("cap must be at least 2".into()));
    }
    let (xs, sub_codes) = if n <= cap {
        (x.clone(), codes.to_vec())
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, n, cap).into_vec();
        idx.sort_unstable();
        (
            x.select(ndarray::Axis(0), &idx),
            idx.iter().map(|&i| codes[i]).collect(),
        )
    };
    let m = xs.nrows();
    if m < 2 {
        return Err(StatsError::Dimension(format!(
            "need at least 2 rows, got {m}"
        )));
    }
    check_finite(&xs, "categorical_distance_correlation_sq x")?;

    let mut a = distance_matrix(&xs);
    double_center(&mut a);

    // double-centered categorical distances in closed form:
    // b_jk = sqrt(2) * [code_j != code_k]; row mean depends only on the
    // category's share, the grand mean on the sum of squared shares
    let sqrt2 = std::f64::consts::SQRT_2;
    let max_code = *sub_codes.iter().max().unwrap();
    let mut counts = vec![0usize; max_code + 1];
    for &c in &sub_codes {
        counts[c] += 1;
    }
    let mf = m as f64;
    let row_mean: Vec<f64> = sub_codes
        .iter()
        .map(|&c| sqrt2 * (mf - counts[c] as f64) / mf)
        .collect();
    let grand = sqrt2
        * (1.0 - counts.iter().map(|&c| (c as f64 / mf) * (c as f64 / mf)).sum::<f64>());

    let n2 = (m * m) as f64;
    let mut dcov2 = 0.0;
    let mut dvar_x = 0.0;
    let mut dvar_y = 0.0;
    for j in 0..m {
        for k in 0..m {
            let raw = if sub_codes[j] == sub_codes[k] { 0.0 } else { sqrt2 };
            let b = raw - row_mean[j] - row_mean[k] + grand;
            let av = a[[j, k]];
            dcov2 += av * b;
            dvar_x += av * av;
            dvar_y += b * b;
        }
    }
    dcov2 /= n2;
    dvar_x /= n2;
    dvar_y /= n2;
    let value = if dvar_x <= 0.0 || dvar_y <= 0.0 {
        0.0
    } else {
        (dcov2 / (dvar_x * dvar_y).sqrt()).clamp(0.0, 1.0)
    };
    Ok(DcValue { value, n: m })
}

/// Squared sample Pearson correlation of two equal-length vectors, 0 by
/// convention when either has zero variance.
pub fn pearson_corr_sq(u: &[f64], v: &[f64]) -> Result<f64, StatsError> {
    if u.len() != v.len() {
        return Err(StatsError::Dimension(format!(
            "vector lengths differ: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    if u.len() < 2 {
        return Err(StatsError::Dimension(format!(
            "need at least 2 samples, got {}",
            u.len()
        )));
    }
    if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite("pearson_corr_sq"));
    }
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let mut suv = 0.0;
    let mut suu = 0.0;
    let mut svv = 0.0;
    for (&a, &b) in u.iter().zip(v.iter()) {
        let da = a - mu;
        let db = b - mv;
        suv += da * db;
        suu += da * da;
        svv += db * db;
    }
    if suu <= 0.0 || svv <= 0.0 {
        return Ok(0.0);
    }
    Ok(((suv * suv) / (suu * svv)).clamp(0.0, 1.0))
}
