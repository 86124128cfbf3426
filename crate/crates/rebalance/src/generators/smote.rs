//! Nearest-neighbor interpolation generator.
//!
//! Each synthetic row interpolates between a uniformly drawn seed row and
//! one of its k nearest neighbors in covariate space, with a single
//! λ ~ U[0,1) applied to every joint column, so outputs stay on the segment
//! between two real observations.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::sample::Sample;
use crate::seed::SeedSpec;

pub fn gen_smote(sample: &Sample, k: usize, n_out: usize, seed: SeedSpec) -> Result<Sample> {
    let n = sample.n();
    if n < 2 {
        return Err(Error::TooFewRows {
            context: "smote",
            needed: 2,
            got: n,
        });
    }
    if k == 0 || k > n - 1 {
        return Err(invalid(format!(
            "smote neighbor count k = {k} must satisfy 1 <= k <= n - 1 = {}",
            n - 1
        )));
    }
    let neighbors = nearest_neighbors(sample, k);
    let d = sample.joint_dim();
    let mut rng = seed.rng();
    let mut out = Vec::with_capacity(n_out * d);
    let mut row_i = vec![0.0; d];
    let mut row_j = vec![0.0; d];
    for _ in 0..n_out {
        let i = rng.random_range(0..n);
        let j = neighbors[i][rng.random_range(0..k)];
        let lambda: f64 = rng.random();
        sample.joint_row_into(i, &mut row_i);
        sample.joint_row_into(j, &mut row_j);
        for c in 0..d {
            out.push(interpolate(row_i[c], row_j[c], lambda));
        }
    }
    sample.from_joint_rows(&out)
}

pub(crate) fn interpolate(a: f64, b: f64, lambda: f64) -> f64 {
    a + lambda * (b - a)
}

/// Exact k-nearest-neighbor lists in covariate space (Euclidean),
/// ties broken by row index.
fn nearest_neighbors(sample: &Sample, k: usize) -> Vec<Vec<usize>> {
    let n = sample.n();
    let p = sample.p();
    let mut lists = Vec::with_capacity(n);
    let mut dist = Vec::with_capacity(n - 1);
    for i in 0..n {
        dist.clear();
        for j in 0..n {
            if j == i {
                continue;
            }
            let mut d2 = 0.0;
            for c in 0..p {
                let diff = sample.x_col(c)[i] - sample.x_col(c)[j];
                d2 += diff * diff;
            }
            dist.push((d2, j));
        }
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        lists.push(dist.iter().take(k).map(|&(_, j)| j).collect());
    }
    lists
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rows_interpolate_on_the_segment() {
        let s = Sample::univariate(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let out = gen_smote(&s, 1, 500, SeedSpec::new(9)).unwrap();
        for i in 0..out.n() {
            let x = out.x_col(0)[i];
            let y = out.y()[i];
            assert!((0.0..=1.0).contains(&x));
            assert!((x - y).abs() < 1e-15, "expected y = x on the segment");
        }
    }

    #[test]
    fn lambda_zero_reproduces_seed_row() {
        assert_eq!(interpolate(3.5, 9.0, 0.0), 3.5);
        assert_eq!(interpolate(3.5, 9.0, 1.0), 9.0);
    }

    #[test]
    fn outputs_stay_in_componentwise_hull() {
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 1.3).sin() * 4.0).collect();
        let y: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).cos() * 2.0 - 1.0).collect();
        let s = Sample::univariate(x.clone(), y.clone()).unwrap();
        let out = gen_smote(&s, 5, 2000, SeedSpec::new(13)).unwrap();
        let (x_min, x_max) = bounds(&x);
        let (y_min, y_max) = bounds(&y);
        for i in 0..out.n() {
            assert!(out.x_col(0)[i] >= x_min && out.x_col(0)[i] <= x_max);
            assert!(out.y()[i] >= y_min && out.y()[i] <= y_max);
        }
    }

    #[test]
    fn duplicate_points_tie_break_by_index() {
        // Three identical covariates: neighbor lists must be stable.
        let s = Sample::univariate(vec![1.0, 1.0, 1.0], vec![1.0, 2.0, 3.0]).unwrap();
        let lists = nearest_neighbors(&s, 2);
        assert_eq!(lists[0], vec![1, 2]);
        assert_eq!(lists[1], vec![0, 2]);
        assert_eq!(lists[2], vec![0, 1]);
    }

    #[test]
    fn k_out_of_range_rejected() {
        let s = Sample::univariate(vec![0.0, 1.0, 2.0], vec![0.0; 3]).unwrap();
        assert!(gen_smote(&s, 0, 5, SeedSpec::new(0)).is_err());
        assert!(gen_smote(&s, 3, 5, SeedSpec::new(0)).is_err());
        assert!(gen_smote(&s, 2, 5, SeedSpec::new(0)).is_ok());
    }

    fn bounds(v: &[f64]) -> (f64, f64) {
        (
            v.iter().cloned().fold(f64::INFINITY, f64::min),
            v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        )
    }
}
