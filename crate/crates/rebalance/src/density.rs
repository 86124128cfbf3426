//! Kernel density estimation with trimming, plug-in bandwidth rules, and
//! evaluatable target densities.
//!
//! The estimator is the standard Gaussian-kernel average
//! `f̂(x) = (1/n) Σ_j K_H(x − X_j)`. A trimming floor `e_n` guards the
//! density ratio used by the resampling weights: `f̂_en = max(f̂, e_n)`,
//! with `e_n = 1/(10 n)` by default.
//!
//! Bandwidths are expressed on the standard-deviation scale: the model
//! stores a symmetric positive-definite matrix `H` and the kernel
//! covariance is `H²`. The ROSE rule gives a diagonal
//! `H = diag((4/((p+2)n))^{1/(p+4)} σ̂_j)`; the Silverman rule scales the
//! full empirical covariance, kernel covariance `(4/((p+2)n))^{2/(p+4)} Σ̂`.

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::Distribution;
use statrs::distribution::ContinuousCDF;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::sample::Sample;
use crate::util::{covariance_matrix, variance};

const LN_2PI: f64 = 1.8378770664093453; // ln(2π)

/// Bandwidth selection rule for [`fit_kde`].
#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthRule {
    /// Full-covariance plug-in rule: kernel covariance c²·Σ̂ with
    /// c = (4/((p+2)n))^{1/(p+4)}.
    Silverman,
    /// Diagonal plug-in rule: H = diag(c·σ̂_j), same c.
    Rose,
    /// Caller-supplied H (standard-deviation scale), stored unchanged.
    Explicit(DMatrix<f64>),
}

/// Trimming floor rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrimRule {
    /// e_n = 1/(10·n).
    Default,
    Explicit(f64),
}

impl TrimRule {
    pub fn floor_for(self, n: usize) -> f64 {
        match self {
            TrimRule::Default => 1.0 / (10.0 * n as f64),
            TrimRule::Explicit(e) => e,
        }
    }
}

/// A fitted Gaussian-kernel density estimate with trimming floor.
#[derive(Debug, Clone)]
pub struct KdeModel {
    points: Vec<f64>, // row-major n × p
    n: usize,
    p: usize,
    h: DMatrix<f64>,
    e_n: f64,
    // Derived from h: lower Cholesky factor of the kernel covariance H²,
    // its inverse, and the log normalization constant of the kernel.
    chol_inv: DMatrix<f64>,
    log_norm: f64,
}

impl KdeModel {
    /// Build a model directly from points and a bandwidth matrix.
    pub fn from_parts(points: Vec<f64>, p: usize, h: DMatrix<f64>, e_n: f64) -> Result<Self> {
        if p == 0 || points.len() % p != 0 {
            return Err(invalid("point matrix shape does not match dimension"));
        }
        if h.nrows() != p || h.ncols() != p {
            return Err(Error::DimensionMismatch {
                context: "bandwidth matrix",
                expected: p,
                got: h.nrows(),
            });
        }
        if e_n <= 0.0 {
            return Err(invalid("trimming floor must be positive"));
        }
        let n = points.len() / p;
        let kernel_cov = &h * &h;
        let chol = Cholesky::new(kernel_cov)
            .ok_or_else(|| invalid("bandwidth matrix is not positive definite"))?;
        let l = chol.l();
        let log_det_l: f64 = (0..p).map(|j| l[(j, j)].ln()).sum();
        let chol_inv = l
            .solve_lower_triangular(&DMatrix::identity(p, p))
            .ok_or_else(|| Error::Numerical("bandwidth Cholesky solve failed".into()))?;
        Ok(Self {
            points,
            n,
            p,
            h,
            e_n,
            chol_inv,
            log_norm: -0.5 * p as f64 * LN_2PI - log_det_l,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Bandwidth matrix on the standard-deviation scale.
    pub fn bandwidth(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn trim_floor(&self) -> f64 {
        self.e_n
    }

    /// Training points, row-major n × p.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Untrimmed density estimate at `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.p, "point dimension mismatch");
        let p = self.p;
        let mut diff = vec![0.0; p];
        let mut acc = 0.0;
        for row in self.points.chunks_exact(p) {
            for j in 0..p {
                diff[j] = x[j] - row[j];
            }
            // u = L⁻¹ (x − X_j); quad = ‖u‖²
            let mut quad = 0.0;
            for j in 0..p {
                let mut u = 0.0;
                for k in 0..=j {
                    u += self.chol_inv[(j, k)] * diff[k];
                }
                quad += u * u;
            }
            acc += (self.log_norm - 0.5 * quad).exp();
        }
        acc / self.n as f64
    }

    /// Trimmed density: max(f̂(x), e_n).
    pub fn eval_trimmed(&self, x: &[f64]) -> f64 {
        self.eval(x).max(self.e_n)
    }

    /// CDF of the (untrimmed) estimate; univariate models only.
    pub fn cdf1(&self, x: f64) -> Result<f64> {
        if self.p != 1 {
            return Err(Error::DimensionMismatch {
                context: "kde cdf",
                expected: 1,
                got: self.p,
            });
        }
        let h = self.h[(0, 0)];
        let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        let sum: f64 = self.points.iter().map(|&c| normal.cdf((x - c) / h)).sum();
        Ok(sum / self.n as f64)
    }

    /// Interval covering effectively all of the estimate's mass.
    pub fn support1(&self) -> Result<(f64, f64)> {
        if self.p != 1 {
            return Err(Error::DimensionMismatch {
                context: "kde support",
                expected: 1,
                got: self.p,
            });
        }
        let lo = self.points.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.points.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let h = self.h[(0, 0)];
        Ok((lo - 8.0 * h, hi + 8.0 * h))
    }
}

/// Fit a KDE on the covariate columns of `sample`.
pub fn fit_kde(sample: &Sample, rule: BandwidthRule, trim: TrimRule) -> Result<KdeModel> {
    let n = sample.n();
    let p = sample.p();
    if n < 2 {
        return Err(Error::TooFewRows {
            context: "fit_kde",
            needed: 2,
            got: n,
        });
    }
    let mut points = vec![0.0; n * p];
    for j in 0..p {
        let col = sample.x_col(j);
        for i in 0..n {
            points[i * p + j] = col[i];
        }
    }
    let h = bandwidth_matrix(&points, n, p, &rule, |j| &sample.layout().x_names[j])?;
    let e_n = trim.floor_for(n);
    if matches!(trim, TrimRule::Explicit(e) if e <= 0.0) {
        return Err(invalid("explicit trimming floor must be positive"));
    }
    KdeModel::from_parts(points, p, h, e_n)
}

/// Fit a KDE directly on row-major points (used for reference datasets
/// that carry no response column).
pub fn fit_kde_on_points(
    points: Vec<f64>,
    p: usize,
    rule: BandwidthRule,
    trim: TrimRule,
) -> Result<KdeModel> {
    if p == 0 || points.len() % p != 0 {
        return Err(invalid("point matrix shape does not match dimension"));
    }
    let n = points.len() / p;
    if n < 2 {
        return Err(Error::TooFewRows {
            context: "fit_kde",
            needed: 2,
            got: n,
        });
    }
    let h = bandwidth_matrix(&points, n, p, &rule, |_| "x")?;
    KdeModel::from_parts(points, p, h, trim.floor_for(n))
}

/// Scalar factor of the plug-in rules: (4/((d+2)n))^{1/(d+4)}.
pub fn plugin_factor(d: usize, n: usize) -> f64 {
    (4.0 / ((d as f64 + 2.0) * n as f64)).powf(1.0 / (d as f64 + 4.0))
}

fn bandwidth_matrix<'a>(
    points: &[f64],
    n: usize,
    p: usize,
    rule: &BandwidthRule,
    col_name: impl Fn(usize) -> &'a str,
) -> Result<DMatrix<f64>> {
    match rule {
        BandwidthRule::Explicit(h) => {
            if h.nrows() != p || h.ncols() != p {
                return Err(Error::DimensionMismatch {
                    context: "explicit bandwidth",
                    expected: p,
                    got: h.nrows(),
                });
            }
            Ok(h.clone())
        }
        BandwidthRule::Rose => {
            let c = plugin_factor(p, n);
            let mut h = DMatrix::zeros(p, p);
            for j in 0..p {
                let col: Vec<f64> = (0..n).map(|i| points[i * p + j]).collect();
                let sd = variance(&col).sqrt();
                if sd == 0.0 {
                    return Err(Error::DegenerateColumn(col_name(j).to_string()));
                }
                h[(j, j)] = c * sd;
            }
            Ok(h)
        }
        BandwidthRule::Silverman => {
            for j in 0..p {
                let col: Vec<f64> = (0..n).map(|i| points[i * p + j]).collect();
                if variance(&col) == 0.0 {
                    return Err(Error::DegenerateColumn(col_name(j).to_string()));
                }
            }
            let c = plugin_factor(p, n);
            let mut cov = covariance_matrix(points, p);
            if Cholesky::new(cov.clone()).is_none() {
                log::warn!("singular empirical covariance; adding 1e-8 ridge");
                for j in 0..p {
                    cov[(j, j)] += 1e-8;
                }
            }
            let sqrt = symmetric_sqrt(&cov)?;
            Ok(sqrt * c)
        }
    }
}

/// Symmetric positive-definite square root via eigendecomposition.
fn symmetric_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = m.clone().symmetric_eigen();
    let p = m.nrows();
    let mut root = DMatrix::zeros(p, p);
    for j in 0..p {
        let ev = eig.eigenvalues[j];
        if ev <= 0.0 {
            return Err(Error::Numerical(
                "covariance matrix is not positive definite".into(),
            ));
        }
        let s = ev.sqrt();
        let v = eig.eigenvectors.column(j);
        for a in 0..p {
            for b in 0..p {
                root[(a, b)] += s * v[a] * v[b];
            }
        }
    }
    Ok(root)
}

/// An evaluatable target density f0 over covariate space.
#[derive(Debug, Clone)]
pub enum TargetDensity {
    /// Beta(alpha, beta) on [0, 1].
    Beta { alpha: f64, beta: f64 },
    /// Normal(mean, sd).
    Normal { mean: f64, sd: f64 },
    /// Trimmed KDE built from a reference dataset.
    Kde(KdeModel),
}

impl TargetDensity {
    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        if alpha <= 0.0 || beta <= 0.0 {
            return Err(invalid("beta target requires positive shape parameters"));
        }
        Ok(TargetDensity::Beta { alpha, beta })
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        if sd <= 0.0 || !mean.is_finite() || !sd.is_finite() {
            return Err(invalid("normal target requires finite mean and positive sd"));
        }
        Ok(TargetDensity::Normal { mean, sd })
    }

    /// Dimension of the covariate space the target is defined on.
    pub fn dim(&self) -> usize {
        match self {
            TargetDensity::Beta { .. } | TargetDensity::Normal { .. } => 1,
            TargetDensity::Kde(m) => m.p(),
        }
    }

    /// Density at a point of matching dimension. Analytic targets return 0
    /// outside their support; the KDE variant is trimmed.
    pub fn pdf(&self, x: &[f64]) -> f64 {
        match self {
            TargetDensity::Beta { .. } | TargetDensity::Normal { .. } => self.pdf1(x[0]),
            TargetDensity::Kde(m) => m.eval_trimmed(x),
        }
    }

    /// Univariate density (dimension-1 targets, or the KDE variant with p=1).
    pub fn pdf1(&self, x: f64) -> f64 {
        match self {
            TargetDensity::Beta { alpha, beta } => beta_pdf(*alpha, *beta, x),
            TargetDensity::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
            TargetDensity::Kde(m) => m.eval_trimmed(&[x]),
        }
    }

    /// Univariate CDF. For the KDE variant this is the untrimmed mixture CDF.
    pub fn cdf1(&self, x: f64) -> Result<f64> {
        match self {
            TargetDensity::Beta { alpha, beta } => {
                if x <= 0.0 {
                    Ok(0.0)
                } else if x >= 1.0 {
                    Ok(1.0)
                } else {
                    Ok(statrs::function::beta::beta_reg(*alpha, *beta, x))
                }
            }
            TargetDensity::Normal { mean, sd } => {
                let n = statrs::distribution::Normal::new(*mean, *sd).unwrap();
                Ok(n.cdf(x))
            }
            TargetDensity::Kde(m) => m.cdf1(x),
        }
    }

    /// A finite interval carrying effectively all target mass (univariate).
    pub fn support1(&self) -> Result<(f64, f64)> {
        match self {
            TargetDensity::Beta { .. } => Ok((0.0, 1.0)),
            TargetDensity::Normal { mean, sd } => Ok((mean - 10.0 * sd, mean + 10.0 * sd)),
            TargetDensity::Kde(m) => m.support1(),
        }
    }

    /// Draw from an analytic target (population synthesis). The KDE variant
    /// is evaluation-only.
    pub fn sample1(&self, rng: &mut impl Rng) -> Result<f64> {
        match self {
            TargetDensity::Beta { alpha, beta } => {
                let dist = rand_distr::Beta::new(*alpha, *beta)
                    .map_err(|e| invalid(format!("beta sampler: {e}")))?;
                Ok(dist.sample(rng))
            }
            TargetDensity::Normal { mean, sd } => {
                let dist = rand_distr::Normal::new(*mean, *sd)
                    .map_err(|e| invalid(format!("normal sampler: {e}")))?;
                Ok(dist.sample(rng))
            }
            TargetDensity::Kde(_) => Err(invalid(
                "cannot draw from a kde target; use an analytic law",
            )),
        }
    }
}

fn beta_pdf(alpha: f64, beta: f64, x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    // Endpoints: finite limits only when the exponent is non-negative.
    if x == 0.0 {
        return if alpha > 1.0 {
            0.0
        } else if alpha == 1.0 {
            beta
        } else {
            f64::INFINITY
        };
    }
    if x == 1.0 {
        return if beta > 1.0 {
            0.0
        } else if beta == 1.0 {
            alpha
        } else {
            f64::INFINITY
        };
    }
    let log_norm = ln_gamma(alpha + beta) - ln_gamma(alpha) - ln_gamma(beta);
    (log_norm + (alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln()).exp()
}

/// Parsed form of a CLI target spec string:
/// `beta:a,b`, `normal:mu,sigma`, or `kde:<path.csv>`.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    Beta { alpha: f64, beta: f64 },
    Normal { mean: f64, sd: f64 },
    KdePath(String),
}

impl std::str::FromStr for TargetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| invalid(format!("bad target spec `{s}`; expected kind:params")))?;
        let two = |rest: &str| -> Result<(f64, f64)> {
            let parts: Vec<&str> = rest.split(',').collect();
            if parts.len() != 2 {
                return Err(invalid(format!("target `{s}` needs two parameters")));
            }
            let a: f64 = parts[0]
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad parameter `{}`", parts[0])))?;
            let b: f64 = parts[1]
                .trim()
                .parse()
                .map_err(|_| invalid(format!("bad parameter `{}`", parts[1])))?;
            Ok((a, b))
        };
        match kind {
            "beta" => {
                let (alpha, beta) = two(rest)?;
                Ok(TargetSpec::Beta { alpha, beta })
            }
            "normal" => {
                let (mean, sd) = two(rest)?;
                Ok(TargetSpec::Normal { mean, sd })
            }
            "kde" => Ok(TargetSpec::KdePath(rest.to_string())),
            other => Err(invalid(format!("unknown target kind `{other}`"))),
        }
    }
}

impl TargetSpec {
    /// Resolve to a density; analytic variants need no data.
    pub fn into_density(self) -> Result<TargetDensity> {
        match self {
            TargetSpec::Beta { alpha, beta } => TargetDensity::beta(alpha, beta),
            TargetSpec::Normal { mean, sd } => TargetDensity::normal(mean, sd),
            TargetSpec::KdePath(p) => Err(invalid(format!(
                "kde target `{p}` must be resolved against a reference dataset"
            ))),
        }
    }
}
