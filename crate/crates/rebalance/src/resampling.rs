//! Weighted resampling of whole observations.
//!
//! Drawing weights are density ratios `ω_i = f0(X_i) / f̂_en(X_i)`,
//! normalized to probabilities `q_i = ω_i / Σ ω_j`. Resampling draws whole
//! rows i.i.d. with replacement using the `q_i`, so the conditional
//! distribution of the response (and any auxiliaries) given the covariates
//! is untouched: only the covariate law moves toward the target.

use rand::Rng;

use crate::density::{KdeModel, TargetDensity};
use crate::error::{Error, Result};
use crate::sample::Sample;
use crate::seed::SeedSpec;

/// Raw drawing weights and their normalized probabilities over a sample's
/// rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawWeights {
    omega: Vec<f64>,
    q: Vec<f64>,
}

impl DrawWeights {
    /// Normalize raw weights. Rejects negative or non-finite entries and
    /// unusably small sums.
    pub fn from_raw(omega: Vec<f64>) -> Result<Self> {
        if omega.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Numerical(
                "drawing weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = omega.iter().sum();
        if sum == 0.0 {
            return Err(Error::ZeroWeights);
        }
        if sum < 1e-300 {
            return Err(Error::WeightUnderflow(sum));
        }
        let q = omega.iter().map(|w| w / sum).collect();
        Ok(Self { omega, q })
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Normalized drawing probabilities; sums to 1.
    pub fn q(&self) -> &[f64] {
        &self.q
    }
}

/// Compute drawing weights for every row of `sample`: target density over
/// trimmed KDE density at the row's covariates.
pub fn compute_weights(
    sample: &Sample,
    target: &TargetDensity,
    kde: &KdeModel,
) -> Result<DrawWeights> {
    if kde.p() != sample.p() {
        return Err(Error::DimensionMismatch {
            context: "kde vs sample covariates",
            expected: sample.p(),
            got: kde.p(),
        });
    }
    if target.dim() != sample.p() {
        return Err(Error::DimensionMismatch {
            context: "target vs sample covariates",
            expected: sample.p(),
            got: target.dim(),
        });
    }
    let mut omega = Vec::with_capacity(sample.n());
    let mut row = vec![0.0; sample.p()];
    for i in 0..sample.n() {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = sample.x_col(j)[i];
        }
        omega.push(target.pdf(&row) / kde.eval_trimmed(&row));
    }
    DrawWeights::from_raw(omega)
}

/// Draw `n_star` whole rows i.i.d. with replacement, row i with probability
/// `q_i`. Deterministic given the seed.
pub fn weighted_resample(
    sample: &Sample,
    weights: &DrawWeights,
    n_star: usize,
    seed: SeedSpec,
) -> Result<Sample> {
    if weights.len() != sample.n() {
        return Err(Error::DimensionMismatch {
            context: "weights vs sample rows",
            expected: sample.n(),
            got: weights.len(),
        });
    }
    let indices = draw_indices(weights.q(), n_star, seed);
    Ok(sample.select_rows(&indices))
}

/// Inverse-CDF categorical draws: binary search over the cumulative q.
pub(crate) fn draw_indices(q: &[f64], count: usize, seed: SeedSpec) -> Vec<usize> {
    let mut cum = Vec::with_capacity(q.len());
    let mut acc = 0.0;
    for &p in q {
        acc += p;
        cum.push(acc);
    }
    if let Some(last) = cum.last_mut() {
        *last = 1.0;
    }
    let mut rng = seed.rng();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.random();
        let idx = cum.partition_point(|&c| c <= u);
        out.push(idx.min(q.len() - 1));
    }
    out
}

/// Weighted empirical CDF at `x` along covariate `coordinate`:
/// `Σ q_i · 1{X_i[coordinate] ≤ x}`.
pub fn weighted_ecdf(sample: &Sample, weights: &DrawWeights, x: f64, coordinate: usize) -> f64 {
    let col = sample.x_col(coordinate);
    col.iter()
        .zip(weights.q())
        .filter(|(v, _)| **v <= x)
        .map(|(_, q)| q)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{fit_kde, BandwidthRule, TrimRule};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn uni(xs: Vec<f64>) -> Sample {
        let n = xs.len();
        Sample::univariate(xs, vec![0.0; n]).unwrap()
    }

    #[test]
    fn normalization_arithmetic() {
        let w = DrawWeights::from_raw(vec![1.0, 3.0]).unwrap();
        assert_eq!(w.q(), &[0.25, 0.75]);
        assert_relative_eq!(w.q().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_and_underflow_weights_error() {
        assert!(matches!(
            DrawWeights::from_raw(vec![0.0, 0.0]),
            Err(Error::ZeroWeights)
        ));
        assert!(matches!(
            DrawWeights::from_raw(vec![1e-308, 1e-310]),
            Err(Error::WeightUnderflow(_))
        ));
    }

    #[test]
    fn target_equal_to_kde_gives_uniform_q() {
        // Using the fitted KDE itself as the target makes every ratio
        // exactly 1 (same trimming floor on both sides).
        let xs = vec![0.1, 0.3, 0.5, 0.55, 0.8, 0.9, 0.24, 0.61];
        let s = uni(xs);
        let kde = fit_kde(&s, BandwidthRule::Silverman, TrimRule::Default).unwrap();
        let target = TargetDensity::Kde(kde.clone());
        let w = compute_weights(&s, &target, &kde).unwrap();
        for &q in w.q() {
            assert_relative_eq!(q, 1.0 / s.n() as f64, epsilon = 1e-14);
        }
    }

    #[test]
    fn degenerate_weight_draws_one_row() {
        let s = uni(vec![1.0, 2.0, 3.0]);
        let w = DrawWeights::from_raw(vec![5.0, 0.0, 0.0]).unwrap();
        let out = weighted_resample(&s, &w, 10, SeedSpec::new(1)).unwrap();
        assert_eq!(out.n(), 10);
        assert!(out.x_col(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn resample_frequencies_match_q() {
        let s = uni(vec![1.0, 2.0]);
        let w = DrawWeights::from_raw(vec![0.9, 0.1]).unwrap();
        let out = weighted_resample(&s, &w, 100_000, SeedSpec::new(7)).unwrap();
        let freq1 = out.x_col(0).iter().filter(|&&v| v == 1.0).count() as f64 / 100_000.0;
        assert!((freq1 - 0.9).abs() < 0.01, "freq1 = {freq1}");
    }

    #[test]
    fn resample_is_closed_over_input_rows() {
        let s = uni(vec![0.4, 1.7, 2.2, 9.9]);
        let w = DrawWeights::from_raw(vec![1.0; 4]).unwrap();
        let out = weighted_resample(&s, &w, 4, SeedSpec::new(3)).unwrap();
        for i in 0..out.n() {
            let x = out.x_col(0)[i];
            let y = out.y()[i];
            assert!(
                (0..s.n()).any(|j| s.x_col(0)[j] == x && s.y()[j] == y),
                "row ({x}, {y}) not in input"
            );
        }
    }

    #[test]
    fn resample_is_deterministic() {
        let s = uni(vec![0.4, 1.7, 2.2, 9.9]);
        let w = DrawWeights::from_raw(vec![0.3, 0.1, 0.5, 0.2]).unwrap();
        let a = weighted_resample(&s, &w, 50, SeedSpec::new(11)).unwrap();
        let b = weighted_resample(&s, &w, 50, SeedSpec::new(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weighted_ecdf_hand_case() {
        let s = uni(vec![1.0, 2.0, 3.0, 4.0]);
        let w = DrawWeights::from_raw(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        // Brute-force indicator sum oracle.
        let oracle = |x: f64| -> f64 {
            s.x_col(0)
                .iter()
                .zip(w.q())
                .map(|(v, q)| if *v <= x { *q } else { 0.0 })
                .sum()
        };
        assert_relative_eq!(weighted_ecdf(&s, &w, 2.5, 0), 0.3, epsilon = 1e-12);
        for x in [-1.0, 1.0, 1.5, 2.0, 3.999, 4.0, 10.0] {
            assert_relative_eq!(weighted_ecdf(&s, &w, x, 0), oracle(x), epsilon = 1e-12);
        }
    }

    #[test]
    fn weighted_ecdf_limits() {
        let s = uni(vec![1.0, 2.0, 3.0]);
        let w = DrawWeights::from_raw(vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(weighted_ecdf(&s, &w, 0.5, 0), 0.0);
        assert_relative_eq!(weighted_ecdf(&s, &w, 3.0, 0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(weighted_ecdf(&s, &w, 99.0, 0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_q_matches_standard_ecdf() {
        let xs = vec![0.9, 0.1, 0.5, 0.3];
        let s = uni(xs.clone());
        let w = DrawWeights::from_raw(vec![2.0; 4]).unwrap();
        for &x in &xs {
            let std_ecdf = xs.iter().filter(|&&v| v <= x).count() as f64 / 4.0;
            assert_relative_eq!(weighted_ecdf(&s, &w, x, 0), std_ecdf, epsilon = 1e-12);
        }
    }

    proptest! {
        // Scale invariance: multiplying all raw weights by c > 0 leaves q
        // unchanged up to floating-point roundoff.
        #[test]
        fn q_is_scale_invariant(
            omega in proptest::collection::vec(0.01f64..100.0, 1..30),
            c in 0.001f64..1000.0,
        ) {
            let a = DrawWeights::from_raw(omega.clone()).unwrap();
            let scaled: Vec<f64> = omega.iter().map(|w| w * c).collect();
            let b = DrawWeights::from_raw(scaled).unwrap();
            for (qa, qb) in a.q().iter().zip(b.q()) {
                prop_assert!((qa - qb).abs() <= 1e-15);
            }
        }

        // q always sums to 1 and is non-negative.
        #[test]
        fn q_is_a_probability_vector(
            omega in proptest::collection::vec(0.0f64..50.0, 1..40),
        ) {
            prop_assume!(omega.iter().sum::<f64>() > 0.0);
            let w = DrawWeights::from_raw(omega).unwrap();
            prop_assert!((w.q().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.q().iter().all(|&q| q >= 0.0));
        }
    }
}
