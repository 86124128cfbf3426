//! Factor-analysis generator: z = W·h + μ + ε with h ~ N(0, I_r) and
//! ε ~ N(0, diag(Φ)), fitted on the joint data by EM.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::sample::{ColumnLayout, Sample};
use crate::seed::SeedSpec;
use crate::util::covariance_matrix;

const LN_2PI: f64 = 1.8378770664093453;

/// A fitted factor model with implied covariance W·Wᵀ + diag(Φ).
#[derive(Debug, Clone)]
pub struct FaModel {
    /// Loading matrix, d × r.
    pub loading: DMatrix<f64>,
    /// Mean vector, length d.
    pub mean: DVector<f64>,
    /// Diagonal noise variances, length d, strictly positive.
    pub noise: DVector<f64>,
    layout: ColumnLayout,
}

impl FaModel {
    pub fn new(
        loading: DMatrix<f64>,
        mean: DVector<f64>,
        noise: DVector<f64>,
        layout: ColumnLayout,
    ) -> Result<Self> {
        let d = layout.joint_dim();
        if loading.nrows() != d || mean.len() != d || noise.len() != d {
            return Err(Error::DimensionMismatch {
                context: "factor model shapes",
                expected: d,
                got: loading.nrows(),
            });
        }
        if noise.iter().any(|&v| v <= 0.0) {
            return Err(invalid("noise variances must be strictly positive"));
        }
        Ok(Self {
            loading,
            mean,
            noise,
            layout,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn factors(&self) -> usize {
        self.loading.ncols()
    }

    /// Model-implied covariance W·Wᵀ + diag(Φ).
    pub fn implied_covariance(&self) -> DMatrix<f64> {
        let mut c = &self.loading * self.loading.transpose();
        for j in 0..self.dim() {
            c[(j, j)] += self.noise[j];
        }
        c
    }
}

/// Fit result with the per-iteration log-likelihood trace.
#[derive(Debug, Clone)]
pub struct FaFit {
    pub model: FaModel,
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

/// Fit the factor model by EM on the joint (x, y, aux) data.
///
/// On non-convergence at `max_iter` the best (last) iterate is returned
/// with a warning.
pub fn fit_fa(
    sample: &Sample,
    r: usize,
    max_iter: usize,
    tol: f64,
    seed: SeedSpec,
) -> Result<FaFit> {
    let d = sample.joint_dim();
    if r == 0 || r >= d {
        return Err(invalid(format!(
            "factor count r = {r} must satisfy 1 <= r < d = {d}"
        )));
    }
    if sample.n() <= d {
        return Err(Error::TooFewRows {
            context: "fit_fa",
            needed: d + 1,
            got: sample.n(),
        });
    }
    let n = sample.n();
    let rows = sample.joint_rows();
    // MLE covariance and mean of the joint data.
    let mut s_cov = covariance_matrix(&rows, d) * ((n as f64 - 1.0) / n as f64);
    let mut mean = DVector::zeros(d);
    for i in 0..n {
        for j in 0..d {
            mean[j] += rows[i * d + j];
        }
    }
    mean /= n as f64;
    // Guard against exactly singular S on degenerate columns.
    let diag_floor = 1e-12 * (s_cov.trace() / d as f64).max(1e-12);
    for j in 0..d {
        if s_cov[(j, j)] < diag_floor {
            s_cov[(j, j)] = diag_floor;
        }
    }

    // Seeded random init for W, diag(S)/2 for the noise.
    let mut rng = seed.rng();
    let w_scale = (s_cov.trace() / (d * r) as f64).sqrt();
    let mut loading = DMatrix::from_fn(d, r, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        0.5 * w_scale * z
    });
    let mut noise: DVector<f64> = DVector::from_fn(d, |j, _| (s_cov[(j, j)] / 2.0).max(diag_floor));

    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;

    for _ in 0..max_iter {
        let ll = fa_log_likelihood(&loading, &noise, &s_cov, n)?;
        let delta = trace.last().map(|&prev| (ll - prev).abs());
        trace.push(ll);
        if let Some(delta) = delta {
            if delta < tol {
                converged = true;
                break;
            }
        }

        // E-step via the Woodbury identity:
        // beta = (I + Wᵀ Ψ⁻¹ W)⁻¹ Wᵀ Ψ⁻¹  (r × d)
        let psi_inv_w = {
            let mut m = loading.clone();
            for i in 0..d {
                for j in 0..r {
                    m[(i, j)] /= noise[i];
                }
            }
            m
        };
        let m_small = DMatrix::identity(r, r) + loading.transpose() * &psi_inv_w;
        let m_chol = Cholesky::new(m_small)
            .ok_or_else(|| Error::Numerical("factor E-step matrix not PD".into()))?;
        let beta = m_chol.solve(&psi_inv_w.transpose());
        // Average second moment of the factors.
        let beta_s = &beta * &s_cov;
        let delta_mat =
            DMatrix::identity(r, r) - &beta * &loading + &beta_s * beta.transpose();

        // M-step.
        let delta_chol = Cholesky::new(delta_mat)
            .ok_or_else(|| Error::Numerical("factor M-step matrix not PD".into()))?;
        let new_loading = delta_chol.solve(&beta_s).transpose();
        for j in 0..d {
            let mut reconstructed = 0.0;
            for k in 0..r {
                reconstructed += new_loading[(j, k)] * beta_s[(k, j)];
            }
            noise[j] = (s_cov[(j, j)] - reconstructed).max(diag_floor);
        }
        loading = new_loading;
    }

    if !converged {
        log::warn!("factor analysis did not converge in {max_iter} iterations; using last iterate");
    }

    Ok(FaFit {
        model: FaModel::new(loading, mean, noise, sample.layout().clone())?,
        log_likelihood: trace,
        converged,
    })
}

fn fa_log_likelihood(
    loading: &DMatrix<f64>,
    noise: &DVector<f64>,
    s_cov: &DMatrix<f64>,
    n: usize,
) -> Result<f64> {
    let d = noise.len();
    let mut c = loading * loading.transpose();
    for j in 0..d {
        c[(j, j)] += noise[j];
    }
    let chol = Cholesky::new(c)
        .ok_or_else(|| Error::Numerical("implied covariance not PD".into()))?;
    let log_det: f64 = (0..d).map(|j| 2.0 * chol.l_dirty()[(j, j)].ln()).sum();
    let c_inv_s = chol.solve(s_cov);
    Ok(-0.5 * n as f64 * (d as f64 * LN_2PI + log_det + c_inv_s.trace()))
}

/// Generate rows from a fitted factor model.
pub fn sample_fa(model: &FaModel, n_out: usize, seed: SeedSpec) -> Result<Sample> {
    let d = model.dim();
    let r = model.factors();
    let mut rng = seed.rng();
    let mut out = Vec::with_capacity(n_out * d);
    let mut h = DVector::zeros(r);
    for _ in 0..n_out {
        for k in 0..r {
            h[k] = StandardNormal.sample(&mut rng);
        }
        let base = &model.loading * &h + &model.mean;
        for j in 0..d {
            let eps: f64 = StandardNormal.sample(&mut rng);
            out.push(base[j] + model.noise[j].sqrt() * eps);
        }
    }
    Sample::from_joint(model.layout.clone(), &out)
}
