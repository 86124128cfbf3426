//! Gaussian copula generator: empirical marginals joined by a Gaussian
//! dependence structure.
//!
//! Fitting transforms each column to normal scores through the empirical
//! CDF (average ranks over n+1) and the standard-normal quantile, then
//! takes the correlation matrix of the scores. Generation draws
//! z ~ N(0, R), maps u = Φ(z), and inverts each marginal by linear
//! interpolation between order statistics — so generated values never
//! leave the observed per-column range.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::ContinuousCDF;

use crate::error::{Error, Result};
use crate::sample::{ColumnLayout, Sample};
use crate::seed::SeedSpec;

/// Fitted copula: sorted marginals plus the normal-score correlation matrix.
#[derive(Debug, Clone)]
pub struct CopulaModel {
    /// Per-column sorted values, used as empirical quantile functions.
    pub marginals: Vec<Vec<f64>>,
    /// Correlation matrix of the normal scores (unit diagonal, PSD).
    pub correlation: DMatrix<f64>,
    layout: ColumnLayout,
}

impl CopulaModel {
    pub fn dim(&self) -> usize {
        self.marginals.len()
    }
}

/// Fit the copula on the joint (x, y, aux) data.
pub fn fit_copula(sample: &Sample) -> Result<CopulaModel> {
    let n = sample.n();
    let d = sample.joint_dim();
    if n < 3 {
        return Err(Error::TooFewRows {
            context: "fit_copula",
            needed: 3,
            got: n,
        });
    }
    let rows = sample.joint_rows();
    let mut marginals = Vec::with_capacity(d);
    let mut scores = vec![0.0; n * d];
    let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
    for j in 0..d {
        let col: Vec<f64> = (0..n).map(|i| rows[i * d + j]).collect();
        if col.iter().all(|&v| v == col[0]) {
            return Err(Error::DegenerateColumn(format!("joint column {j}")));
        }
        let ranks = average_ranks(&col);
        for i in 0..n {
            let u = ranks[i] / (n as f64 + 1.0);
            scores[i * d + j] = normal.inverse_cdf(u);
        }
        let mut sorted = col;
        sorted.sort_by(f64::total_cmp);
        marginals.push(sorted);
    }

    // Pearson correlation of the score columns.
    let mut correlation = DMatrix::identity(d, d);
    let mut sds = vec![0.0; d];
    let mut means = vec![0.0; d];
    for j in 0..d {
        let col: Vec<f64> = (0..n).map(|i| scores[i * d + j]).collect();
        means[j] = crate::util::mean(&col);
        sds[j] = crate::util::variance(&col).sqrt();
    }
    for a in 0..d {
        for b in (a + 1)..d {
            let mut cov = 0.0;
            for i in 0..n {
                cov += (scores[i * d + a] - means[a]) * (scores[i * d + b] - means[b]);
            }
            cov /= (n - 1) as f64;
            let r = cov / (sds[a] * sds[b]);
            correlation[(a, b)] = r;
            correlation[(b, a)] = r;
        }
    }

    Ok(CopulaModel {
        marginals,
        correlation,
        layout: sample.layout().clone(),
    })
}

/// Generate rows from a fitted copula.
pub fn sample_copula(model: &CopulaModel, n_out: usize, seed: SeedSpec) -> Result<Sample> {
    let d = model.dim();
    let factor = pd_cholesky_with_shrinkage(&model.correlation)?;
    let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
    let mut rng = seed.rng();
    let mut out = Vec::with_capacity(n_out * d);
    let mut eps = DVector::zeros(d);
    for _ in 0..n_out {
        for j in 0..d {
            eps[j] = StandardNormal.sample(&mut rng);
        }
        let z = &factor * &eps;
        for j in 0..d {
            let u = normal.cdf(z[j]);
            out.push(empirical_quantile(&model.marginals[j], u));
        }
    }
    Sample::from_joint(model.layout.clone(), &out)
}

/// Cholesky factor of the correlation matrix, shrinking toward the
/// identity when the fitted matrix is rank degenerate.
fn pd_cholesky_with_shrinkage(correlation: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = Cholesky::new(correlation.clone()) {
        return Ok(chol.l());
    }
    let d = correlation.nrows();
    let mut gamma = 1e-6;
    while gamma <= 0.5 {
        let shrunk = correlation * (1.0 - gamma) + DMatrix::identity(d, d) * gamma;
        if let Some(chol) = Cholesky::new(shrunk) {
            log::warn!("rank-degenerate correlation; shrunk toward identity (gamma = {gamma:e})");
            return Ok(chol.l());
        }
        gamma *= 10.0;
    }
    Err(Error::Numerical(
        "correlation matrix could not be regularized".into(),
    ))
}

/// Average ranks (1-based), ties share their mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let order = crate::util::argsort(values);
    let n = values.len();
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0; // mean of 1-based ranks i+1..=j+1
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Linear interpolation between order statistics; u in [0, 1].
fn empirical_quantile(sorted: &[f64], u: f64) -> f64 {
    crate::util::quantile_sorted(sorted, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedSpec;

    fn joint_sample(cols: Vec<Vec<f64>>) -> Sample {
        let _n = cols[0].len();
        let layout = ColumnLayout {
            x_names: (0..cols.len() - 1).map(|i| format!("x{i}")).collect(),
            y_name: "y".into(),
            aux_names: vec![],
        };
        let x = cols[..cols.len() - 1].to_vec();
        let y = cols[cols.len() - 1].clone();
        Sample::new(x, y, vec![], layout).unwrap()
    }

    #[test]
    fn independent_columns_give_small_correlation() {
        let n = 10_000;
        let mut rng = SeedSpec::new(17).rng();
        let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = joint_sample(vec![a, b]);
        let model = fit_copula(&s).unwrap();
        assert!(
            model.correlation[(0, 1)].abs() < 0.05,
            "off-diagonal = {}",
            model.correlation[(0, 1)]
        );
    }

    #[test]
    fn duplicated_column_has_unit_correlation() {
        let n = 500;
        let col: Vec<f64> = (0..n).map(|i| ((i * 37) % 101) as f64).collect();
        let s = joint_sample(vec![col.clone(), col]);
        let model = fit_copula(&s).unwrap();
        assert!(
            (model.correlation[(0, 1)] - 1.0).abs() < 1e-6,
            "off-diagonal = {}",
            model.correlation[(0, 1)]
        );
        // Sampling still works through the shrinkage fallback.
        let out = sample_copula(&model, 100, SeedSpec::new(1)).unwrap();
        assert_eq!(out.n(), 100);
    }

    #[test]
    fn generated_values_stay_in_source_range() {
        let x: Vec<f64> = (0..200).map(|i| (i as f64 * 0.17).sin() * 3.0).collect();
        let y: Vec<f64> = (0..200).map(|i| (i as f64 * 0.05).exp().min(50.0)).collect();
        let s = joint_sample(vec![x.clone(), y.clone()]);
        let model = fit_copula(&s).unwrap();
        let out = sample_copula(&model, 5000, SeedSpec::new(5)).unwrap();
        let (x_min, x_max) = bounds(&x);
        let (y_min, y_max) = bounds(&y);
        for i in 0..out.n() {
            assert!(out.x_col(0)[i] >= x_min && out.x_col(0)[i] <= x_max);
            assert!(out.y()[i] >= y_min && out.y()[i] <= y_max);
        }
    }

    #[test]
    fn constant_column_rejected() {
        let s = joint_sample(vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0; 4]]);
        assert!(matches!(
            fit_copula(&s),
            Err(Error::DegenerateColumn(_))
        ));
    }

    #[test]
    fn average_ranks_handle_ties() {
        let ranks = average_ranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(ranks, vec![3.5, 1.0, 3.5, 2.0]);
    }

    fn bounds(v: &[f64]) -> (f64, f64) {
        (
            v.iter().cloned().fold(f64::INFINITY, f64::min),
            v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        )
    }
}
