//! Perturbation generators: Gaussian noise and the smoothed bootstrap.
//!
//! Both draw a seed row uniformly and add a centered Gaussian perturbation
//! to every joint column. They differ in the noise scale: Gaussian noise
//! uses `delta · σ̂²_col` per column, the smoothed bootstrap uses a kernel
//! bandwidth computed from a plug-in rule over the joint space.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::density::plugin_factor;
use crate::error::{Error, Result};
use crate::sample::Sample;
use crate::seed::SeedSpec;
use crate::util::{covariance_matrix, variance};

/// Seed row plus independent per-column Gaussian noise with variance
/// `delta · σ̂²_col` (σ̂² the column's empirical variance). `delta = 0`
/// reproduces a plain bootstrap.
pub fn gen_gaussian_noise(
    sample: &Sample,
    delta: f64,
    n_out: usize,
    seed: SeedSpec,
) -> Result<Sample> {
    if sample.n() < 2 {
        return Err(Error::TooFewRows {
            context: "gaussian noise generator",
            needed: 2,
            got: sample.n(),
        });
    }
    if !(delta >= 0.0) {
        return Err(crate::error::invalid("noise scale delta must be >= 0"));
    }
    let d = sample.joint_dim();
    let rows = sample.joint_rows();
    let mut sds = Vec::with_capacity(d);
    for j in 0..d {
        let col: Vec<f64> = (0..sample.n()).map(|i| rows[i * d + j]).collect();
        let var = variance(&col);
        if var == 0.0 && delta > 0.0 {
            log::warn!("column {j} has zero variance; emitting zero noise for it");
        }
        sds.push((delta * var).sqrt());
    }
    perturbed_rows(sample, n_out, seed, |rng, out| {
        for (j, slot) in out.iter_mut().enumerate() {
            // Draw the standard normal unconditionally so the stream
            // consumption does not depend on delta; scaling happens after.
            let z: f64 = StandardNormal.sample(rng);
            *slot = sds[j] * z;
        }
    })
}

/// Bandwidth rule for the smoothed bootstrap, applied over the joint
/// (x, y, aux) space of dimension d.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BootstrapRule {
    /// Diagonal: noise sd per column is (4/((d+2)n))^(1/(d+4)) · σ̂_j.
    Rose,
    /// Full covariance: kernel covariance (4/((d+2)n))^(2/(d+4)) · Σ̂.
    Silverman,
}

/// Smoothed bootstrap: seed row plus a draw from the Gaussian kernel
/// centered at the seed, bandwidth per `rule`.
pub fn gen_smoothed_bootstrap(
    sample: &Sample,
    rule: BootstrapRule,
    n_out: usize,
    seed: SeedSpec,
) -> Result<Sample> {
    if sample.n() < 2 {
        return Err(Error::TooFewRows {
            context: "smoothed bootstrap",
            needed: 2,
            got: sample.n(),
        });
    }
    let d = sample.joint_dim();
    let n = sample.n();
    let rows = sample.joint_rows();
    let c = plugin_factor(d, n);
    let kernel_cov = match rule {
        BootstrapRule::Rose => {
            let mut cov = DMatrix::zeros(d, d);
            for j in 0..d {
                let col: Vec<f64> = (0..n).map(|i| rows[i * d + j]).collect();
                let sd = variance(&col).sqrt();
                cov[(j, j)] = (c * sd) * (c * sd);
            }
            cov
        }
        BootstrapRule::Silverman => {
            let mut cov = covariance_matrix(&rows, d);
            if nalgebra::Cholesky::new(cov.clone()).is_none() {
                log::warn!("singular joint covariance; adding 1e-8 ridge");
                for j in 0..d {
                    cov[(j, j)] += 1e-8;
                }
            }
            cov * (c * c)
        }
    };
    gen_smoothed_bootstrap_with_cov(sample, &kernel_cov, n_out, seed)
}

/// Smoothed bootstrap with an explicit kernel covariance over the joint
/// space. A zero matrix degenerates to the plain bootstrap.
pub fn gen_smoothed_bootstrap_with_cov(
    sample: &Sample,
    kernel_cov: &DMatrix<f64>,
    n_out: usize,
    seed: SeedSpec,
) -> Result<Sample> {
    let d = sample.joint_dim();
    if kernel_cov.nrows() != d || kernel_cov.ncols() != d {
        return Err(Error::DimensionMismatch {
            context: "kernel covariance",
            expected: d,
            got: kernel_cov.nrows(),
        });
    }
    if sample.n() < 2 {
        return Err(Error::TooFewRows {
            context: "smoothed bootstrap",
            needed: 2,
            got: sample.n(),
        });
    }
    let factor = psd_factor(kernel_cov)?;
    let mut z = vec![0.0; d];
    perturbed_rows(sample, n_out, seed, move |rng, out| {
        for slot in z.iter_mut() {
            *slot = StandardNormal.sample(rng);
        }
        for (j, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in 0..z.len() {
                acc += factor[(j, k)] * z[k];
            }
            *slot = acc;
        }
    })
}

/// Factor F with F·Fᵀ = m for a positive semidefinite matrix, via
/// eigendecomposition (tolerates zero eigenvalues, unlike Cholesky).
fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let scale = m.diagonal().amax().max(1.0);
    let mut f = DMatrix::zeros(d, d);
    for j in 0..d {
        let ev = eig.eigenvalues[j];
        if ev < -1e-9 * scale {
            return Err(Error::Numerical(
                "kernel covariance has a negative eigenvalue".into(),
            ));
        }
        let s = ev.max(0.0).sqrt();
        for i in 0..d {
            f[(i, j)] = eig.eigenvectors[(i, j)] * s;
        }
    }
    Ok(f)
}

/// Shared driver: draw a uniform seed row, let `noise` fill a perturbation
/// vector, emit seed + perturbation.
fn perturbed_rows(
    sample: &Sample,
    n_out: usize,
    seed: SeedSpec,
    mut noise: impl FnMut(&mut rand_chacha::ChaCha12Rng, &mut [f64]),
) -> Result<Sample> {
    let d = sample.joint_dim();
    let n = sample.n();
    let mut rng = seed.rng();
    let mut base = vec![0.0; d];
    let mut eps = vec![0.0; d];
    let mut out = Vec::with_capacity(n_out * d);
    for _ in 0..n_out {
        let i = rng.random_range(0..n);
        sample.joint_row_into(i, &mut base);
        noise(&mut rng, &mut eps);
        for j in 0..d {
            out.push(base[j] + eps[j]);
        }
    }
    sample.from_joint_rows(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::{mean, variance};

    fn fixture(n: usize) -> Sample {
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.73).sin() * 2.0 + 1.0).collect();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.31).cos() * 0.5).collect();
        Sample::univariate(x, y).unwrap()
    }

    #[test]
    fn zero_delta_copies_input_rows() {
        let s = fixture(40);
        let out = gen_gaussian_noise(&s, 0.0, 200, SeedSpec::new(4)).unwrap();
        for i in 0..out.n() {
            let x = out.x_col(0)[i];
            let y = out.y()[i];
            assert!(
                (0..s.n()).any(|j| s.x_col(0)[j] == x && s.y()[j] == y),
                "row ({x}, {y}) is not an exact input copy"
            );
        }
    }

    #[test]
    fn zero_rows_gives_empty_sample() {
        let s = fixture(10);
        let out = gen_gaussian_noise(&s, 0.1, 0, SeedSpec::new(4)).unwrap();
        assert_eq!(out.n(), 0);
    }

    #[test]
    fn variance_inflation_matches_independent_sum() {
        // Var(output) = Var(seed draw) + delta·σ̂² ≈ (1 + delta)·σ̂².
        let s = fixture(1000);
        let delta = 0.1;
        let out = gen_gaussian_noise(&s, delta, 100_000, SeedSpec::new(8)).unwrap();
        for (col, src) in [(out.x_col(0), s.x_col(0)), (out.y(), s.y())] {
            let expected = (1.0 + delta) * variance(src);
            let got = variance(col);
            assert!(
                (got / expected - 1.0).abs() < 0.01,
                "variance {got} vs expected {expected}"
            );
        }
    }

    #[test]
    fn zero_bandwidth_is_plain_bootstrap() {
        let s = fixture(25);
        let zero = DMatrix::zeros(2, 2);
        let out = gen_smoothed_bootstrap_with_cov(&s, &zero, 100, SeedSpec::new(2)).unwrap();
        for i in 0..out.n() {
            let x = out.x_col(0)[i];
            let y = out.y()[i];
            assert!((0..s.n()).any(|j| s.x_col(0)[j] == x && s.y()[j] == y));
        }
    }

    #[test]
    fn rose_noise_scale_matches_plugin_formula() {
        // d = 2 joint space (x, y), n = 1000, unit variance per column:
        // per-coordinate noise sd = (4/((2+2)·1000))^(1/6) ≈ 0.31623.
        let n = 1000;
        let raw: Vec<f64> = (0..n).map(|i| (i as f64 * 0.61).sin()).collect();
        let sd = variance(&raw).sqrt();
        let x: Vec<f64> = raw.iter().map(|v| v / sd).collect();
        let raw_y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.17).cos()).collect();
        let sd_y = variance(&raw_y).sqrt();
        let y: Vec<f64> = raw_y.iter().map(|v| v / sd_y).collect();
        let s = Sample::univariate(x, y).unwrap();

        let out = gen_smoothed_bootstrap(&s, BootstrapRule::Rose, 200_000, SeedSpec::new(6))
            .unwrap();
        // Output variance = MLE seed variance + noise variance.
        let expected_noise_sd = 0.001f64.powf(1.0 / 6.0);
        let seed_var_mle = variance(s.x_col(0)) * (n as f64 - 1.0) / n as f64;
        let noise_var = variance(out.x_col(0)) - seed_var_mle;
        assert!(
            (noise_var.sqrt() - expected_noise_sd).abs() < 0.01,
            "noise sd = {}, expected {expected_noise_sd}",
            noise_var.sqrt()
        );
    }

    #[test]
    fn silverman_output_tracks_source_distribution() {
        let s = fixture(1000);
        let out =
            gen_smoothed_bootstrap(&s, BootstrapRule::Silverman, 100_000, SeedSpec::new(11))
                .unwrap();
        let ks = crate::diagnostics::ks_two_sample(out.x_col(0), s.x_col(0));
        assert!(ks < 0.05, "ks = {ks}");
        // Means agree closely; the smoothing only widens the spread.
        assert!((mean(out.x_col(0)) - mean(s.x_col(0))).abs() < 0.05);
    }

    #[test]
    fn constant_column_gets_zero_noise() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = vec![7.0; 6];
        let s = Sample::univariate(x, y).unwrap();
        let out = gen_gaussian_noise(&s, 0.5, 50, SeedSpec::new(1)).unwrap();
        assert!(out.y().iter().all(|&v| v == 7.0));
    }
}
