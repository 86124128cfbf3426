//! Small numeric helpers shared across modules.

use nalgebra::DMatrix;

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance (n - 1 denominator).
pub(crate) fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

/// Empirical covariance matrix of row-major data (n × d), unbiased.
pub(crate) fn covariance_matrix(rows: &[f64], d: usize) -> DMatrix<f64> {
    let n = rows.len() / d;
    let mut means = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            means[j] += rows[i * d + j];
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..n {
        for j in 0..d {
            let dj = rows[i * d + j] - means[j];
            for k in j..d {
                let dk = rows[i * d + k] - means[k];
                cov[(j, k)] += dj * dk;
            }
        }
    }
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    for j in 0..d {
        for k in j..d {
            cov[(j, k)] /= denom;
            cov[(k, j)] = cov[(j, k)];
        }
    }
    cov
}

/// Linear-interpolation quantile of a sorted slice, q in [0, 1].
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub(crate) fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Sort indices so that `values[idx]` is ascending. NaN-free input assumed.
pub(crate) fn argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn variance_matches_hand_value() {
        // var of 1,2,3,4 = 5/3 (unbiased)
        assert_relative_eq!(variance(&[1.0, 2.0, 3.0, 4.0]), 5.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn covariance_matrix_is_symmetric() {
        let rows = vec![1.0, 2.0, 2.0, 4.1, 3.0, 5.9, 4.0, 8.2];
        let cov = covariance_matrix(&rows, 2);
        assert_relative_eq!(cov[(0, 1)], cov[(1, 0)], epsilon = 1e-15);
        assert!(cov[(0, 0)] > 0.0 && cov[(1, 1)] > 0.0);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0];
        assert_relative_eq!(quantile_sorted(&v, 0.5), 1.5);
        assert_relative_eq!(quantile_sorted(&v, 0.0), 0.0);
        assert_relative_eq!(quantile_sorted(&v, 1.0), 3.0);
    }

    #[test]
    fn logsumexp_stable() {
        let v = [1000.0, 1000.0];
        assert_relative_eq!(logsumexp(&v), 1000.0 + 2f64.ln(), epsilon = 1e-12);
    }
}
