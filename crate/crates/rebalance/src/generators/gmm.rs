//! Gaussian mixture model over the joint (x, y, aux) space, fitted by EM.
//!
//! The E-step runs in log space; the M-step uses responsibility-weighted
//! moments. Covariances are left at their maximum-likelihood values and
//! only receive a diagonal ridge (1e-6 · trace/d) when they fail to be
//! positive definite, so a single-component fit reproduces the closed-form
//! estimates exactly.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::sample::{ColumnLayout, Sample};
use crate::seed::SeedSpec;
use crate::util::logsumexp;

const LN_2PI: f64 = 1.8378770664093453;
const COLLAPSE_WEIGHT: f64 = 1e-10;
const RESTARTS: usize = 3;

/// A fitted joint mixture: component weights, means, and covariances.
#[derive(Debug, Clone)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    layout: ColumnLayout,
}

/// Fit result with the per-iteration log-likelihood trace of the winning
/// restart.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Total log-likelihood before each M-step, nondecreasing.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    /// Components dropped after collapsing below weight 1e-10.
    pub components_dropped: usize,
}

impl GmmModel {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }

    pub fn layout(&self) -> &ColumnLayout {
        &self.layout
    }

    /// Argmax-responsibility cluster index for every row of `sample`.
    pub fn hard_assign(&self, sample: &Sample) -> Result<Vec<usize>> {
        let d = self.dim();
        if sample.joint_dim() != d {
            return Err(Error::DimensionMismatch {
                context: "gmm assignment",
                expected: d,
                got: sample.joint_dim(),
            });
        }
        let comps = precompute(self)?;
        let rows = sample.joint_rows();
        let mut out = Vec::with_capacity(sample.n());
        for row in rows.chunks_exact(d) {
            let mut best = 0;
            let mut best_lp = f64::NEG_INFINITY;
            for (g, comp) in comps.iter().enumerate() {
                let lp = comp.log_weighted_pdf(row);
                if lp > best_lp {
                    best_lp = lp;
                    best = g;
                }
            }
            out.push(best);
        }
        Ok(out)
    }
}

/// Fit a mixture with `g` components; convenience wrapper over
/// [`fit_gmm_detail`].
pub fn fit_gmm(
    sample: &Sample,
    g: usize,
    max_iter: usize,
    tol: f64,
    seed: SeedSpec,
) -> Result<GmmModel> {
    fit_gmm_detail(sample, g, max_iter, tol, seed).map(|fit| fit.model)
}

/// Fit a mixture, keeping the best of three k-means++-seeded restarts.
/// A component whose weight collapses below 1e-10 is dropped and the fit
/// restarts with one component fewer.
pub fn fit_gmm_detail(
    sample: &Sample,
    g: usize,
    max_iter: usize,
    tol: f64,
    seed: SeedSpec,
) -> Result<GmmFit> {
    if g == 0 {
        return Err(invalid("component count must be at least 1"));
    }
    let d = sample.joint_dim();
    let needed = g * (d + 1);
    if sample.n() < needed {
        return Err(Error::TooFewRows {
            context: "fit_gmm",
            needed,
            got: sample.n(),
        });
    }
    let rows = sample.joint_rows();
    let mut current_g = g;
    let mut dropped = 0;
    loop {
        match fit_with_restarts(&rows, d, current_g, max_iter, tol, seed) {
            Ok((weights, means, covariances, trace, converged)) => {
                return Ok(GmmFit {
                    model: GmmModel {
                        weights,
                        means,
                        covariances,
                        layout: sample.layout().clone(),
                    },
                    log_likelihood: trace,
                    converged,
                    components_dropped: dropped,
                });
            }
            Err(FitFailure::Collapsed) => {
                if current_g == 1 {
                    return Err(Error::Numerical(
                        "mixture collapsed even with a single component".into(),
                    ));
                }
                log::warn!(
                    "mixture component collapsed; refitting with {} components",
                    current_g - 1
                );
                current_g -= 1;
                dropped += 1;
            }
            Err(FitFailure::Hard(e)) => return Err(e),
        }
    }
}

enum FitFailure {
    Collapsed,
    Hard(Error),
}

type FitOutput = (
    Vec<f64>,
    Vec<DVector<f64>>,
    Vec<DMatrix<f64>>,
    Vec<f64>,
    bool,
);

fn fit_with_restarts(
    rows: &[f64],
    d: usize,
    g: usize,
    max_iter: usize,
    tol: f64,
    seed: SeedSpec,
) -> std::result::Result<FitOutput, FitFailure> {
    let mut best: Option<FitOutput> = None;
    for restart in 0..RESTARTS {
        let out = fit_single(rows, d, g, max_iter, tol, seed.stream(restart as u64))?;
        let replace = match &best {
            None => true,
            Some(prev) => out.3.last() > prev.3.last(),
        };
        if replace {
            best = Some(out);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn fit_single(
    rows: &[f64],
    d: usize,
    g: usize,
    max_iter: usize,
    tol: f64,
    seed: SeedSpec,
) -> std::result::Result<FitOutput, FitFailure> {
    let n = rows.len() / d;
    let mut rng = seed.rng();

    // k-means++ centers as initial means.
    let centers = kmeanspp_centers(rows, d, n, g, &mut rng);
    let mut means: Vec<DVector<f64>> = centers
        .iter()
        .map(|&i| DVector::from_row_slice(&rows[i * d..(i + 1) * d]))
        .collect();
    let data_cov = crate::util::covariance_matrix(rows, d);
    let mut covariances: Vec<DMatrix<f64>> = (0..g)
        .map(|_| ensure_pd(data_cov.clone()))
        .collect::<Result<_>>()
        .map_err(FitFailure::Hard)?;
    let mut weights = vec![1.0 / g as f64; g];

    let mut trace = Vec::new();
    let mut converged = false;
    let mut resp = vec![0.0; n * g];
    let mut log_p = vec![0.0; g];

    for _ in 0..max_iter {
        // E-step and log-likelihood with current parameters.
        let comps: Vec<Component> = (0..g)
            .map(|j| Component::new(weights[j], &means[j], &covariances[j]))
            .collect::<Result<_>>()
            .map_err(FitFailure::Hard)?;
        let mut ll = 0.0;
        for i in 0..n {
            let row = &rows[i * d..(i + 1) * d];
            for (j, comp) in comps.iter().enumerate() {
                log_p[j] = comp.log_weighted_pdf(row);
            }
            let lse = logsumexp(&log_p);
            ll += lse;
            for j in 0..g {
                resp[i * g + j] = (log_p[j] - lse).exp();
            }
        }
        let delta = trace.last().map(|&prev: &f64| (ll - prev).abs());
        trace.push(ll);
        if let Some(delta) = delta {
            if delta < tol {
                converged = true;
                break;
            }
        }

        // M-step.
        for j in 0..g {
            let nk: f64 = (0..n).map(|i| resp[i * g + j]).sum();
            if nk / (n as f64) < COLLAPSE_WEIGHT {
                return Err(FitFailure::Collapsed);
            }
            weights[j] = nk / n as f64;
            let mut mean = DVector::zeros(d);
            for i in 0..n {
                let r = resp[i * g + j];
                for c in 0..d {
                    mean[c] += r * rows[i * d + c];
                }
            }
            mean /= nk;
            let mut cov = DMatrix::zeros(d, d);
            for i in 0..n {
                let r = resp[i * g + j];
                for a in 0..d {
                    let da = rows[i * d + a] - mean[a];
                    for b in a..d {
                        let db = rows[i * d + b] - mean[b];
                        cov[(a, b)] += r * da * db;
                    }
                }
            }
            for a in 0..d {
                for b in a..d {
                    cov[(a, b)] /= nk;
                    cov[(b, a)] = cov[(a, b)];
                }
            }
            means[j] = mean;
            covariances[j] = ensure_pd(cov).map_err(FitFailure::Hard)?;
        }
    }

    Ok((weights, means, covariances, trace, converged))
}

/// Pick g k-means++ centers (row indices).
fn kmeanspp_centers(
    rows: &[f64],
    d: usize,
    n: usize,
    g: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let mut centers = Vec::with_capacity(g);
    centers.push(rng.random_range(0..n));
    let mut d2 = vec![f64::INFINITY; n];
    while centers.len() < g {
        let last = *centers.last().unwrap();
        for i in 0..n {
            let mut dist = 0.0;
            for c in 0..d {
                let diff = rows[i * d + c] - rows[last * d + c];
                dist += diff * diff;
            }
            if dist < d2[i] {
                d2[i] = dist;
            }
        }
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(next);
    }
    centers
}

/// Add the diagnostic ridge only when the matrix is not positive definite.
fn ensure_pd(mut cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = cov.nrows();
    if nalgebra::Cholesky::new(cov.clone()).is_some() {
        return Ok(cov);
    }
    let ridge = 1e-6 * cov.trace().max(1e-300) / d as f64;
    log::warn!("covariance not positive definite; adding ridge {ridge:e}");
    for _ in 0..24 {
        for j in 0..d {
            cov[(j, j)] += ridge;
        }
        if nalgebra::Cholesky::new(cov.clone()).is_some() {
            return Ok(cov);
        }
    }
    Err(Error::Numerical(
        "covariance could not be regularized to positive definite".into(),
    ))
}

/// Precompute the weighted-Gaussian evaluators of a model's components.
fn precompute(model: &GmmModel) -> Result<Vec<Component>> {
    (0..model.components())
        .map(|g| Component::new(model.weights[g], &model.means[g], &model.covariances[g]))
        .collect()
}

/// Precomputed per-component Gaussian evaluator.
struct Component {
    log_weight: f64,
    mean: DVector<f64>,
    chol_inv: DMatrix<f64>,
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        let chol = nalgebra::Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Numerical("component covariance not PD".into()))?;
        let l = chol.l();
        let log_det: f64 = (0..d).map(|j| l[(j, j)].ln()).sum();
        let chol_inv = l
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        Ok(Self {
            log_weight: weight.max(1e-300).ln(),
            mean: mean.clone(),
            chol_inv,
            log_norm: -0.5 * d as f64 * LN_2PI - log_det,
        })
    }

    fn log_weighted_pdf(&self, row: &[f64]) -> f64 {
        let d = row.len();
        let mut quad = 0.0;
        for j in 0..d {
            let mut u = 0.0;
            for k in 0..=j {
                u += self.chol_inv[(j, k)] * (row[k] - self.mean[k]);
            }
            quad += u * u;
        }
        self.log_weight + self.log_norm - 0.5 * quad
    }
}

/// Draw `n_out` rows from the mixture: component by weight, then a
/// multivariate Gaussian draw.
pub fn sample_gmm(model: &GmmModel, n_out: usize, seed: SeedSpec) -> Result<Sample> {
    let g = model.components();
    if g == 0 {
        return Err(invalid("empty mixture"));
    }
    let d = model.dim();
    let mut cum = Vec::with_capacity(g);
    let mut acc = 0.0;
    for &w in &model.weights {
        acc += w;
        cum.push(acc);
    }
    if let Some(last) = cum.last_mut() {
        *last = 1.0;
    }
    let factors: Vec<DMatrix<f64>> = model
        .covariances
        .iter()
        .map(|cov| {
            nalgebra::Cholesky::new(cov.clone())
                .map(|c| c.l())
                .ok_or_else(|| Error::Numerical("component covariance not PD".into()))
        })
        .collect::<Result<_>>()?;

    let mut rng = seed.rng();
    let mut out = Vec::with_capacity(n_out * d);
    let mut z = DVector::zeros(d);
    for _ in 0..n_out {
        let u: f64 = rng.random();
        let comp = cum.partition_point(|&c| c <= u).min(g - 1);
        for j in 0..d {
            z[j] = StandardNormal.sample(&mut rng);
        }
        let draw = &model.means[comp] + &factors[comp] * &z;
        out.extend(draw.iter());
    }
    Sample::from_joint(model.layout.clone(), &out)
}
