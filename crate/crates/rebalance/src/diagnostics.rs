//! Imbalance and closeness diagnostics: Kolmogorov-Smirnov distances,
//! ratio-deviation reports over a covariate partition, and histogram
//! exports.

use serde::Serialize;

use crate::density::TargetDensity;
use crate::error::{invalid, Error, Result};
use crate::sample::Sample;

/// Supremum absolute difference between two CDFs over `points`.
///
/// For two empirical CDFs this is the exact two-sample KS statistic
/// whenever `points` contains both samples' jump points.
pub fn ks_distance(
    cdf_a: impl Fn(f64) -> f64,
    cdf_b: impl Fn(f64) -> f64,
    points: &[f64],
) -> f64 {
    assert!(!points.is_empty(), "evaluation grid must be non-empty");
    points
        .iter()
        .map(|&x| (cdf_a(x) - cdf_b(x)).abs())
        .fold(0.0, f64::max)
}

/// Right-continuous empirical CDF of a set of values.
#[derive(Debug, Clone)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Self { sorted: values }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        let count = self.sorted.partition_point(|&v| v <= x);
        count as f64 / self.sorted.len() as f64
    }

    /// The jump points (sorted).
    pub fn points(&self) -> &[f64] {
        &self.sorted
    }
}

/// Exact two-sample KS statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let fa = Ecdf::new(a.to_vec());
    let fb = Ecdf::new(b.to_vec());
    let mut points: Vec<f64> = a.iter().chain(b.iter()).cloned().collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    ks_distance(|x| fa.eval(x), |x| fb.eval(x), &points)
}

/// KS distance between a sample of values and a univariate target CDF,
/// evaluated on a fixed grid over the target support plus all sample
/// points.
pub fn ks_to_target(values: &[f64], target: &TargetDensity, grid_size: usize) -> Result<f64> {
    let ecdf = Ecdf::new(values.to_vec());
    let (lo, hi) = target.support1()?;
    let mut points: Vec<f64> = (0..grid_size)
        .map(|i| lo + (hi - lo) * i as f64 / (grid_size - 1) as f64)
        .collect();
    points.extend_from_slice(values);
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut worst = 0.0f64;
    for &x in &points {
        let d = (ecdf.eval(x) - target.cdf1(x)?).abs();
        worst = worst.max(d);
        // Also check just below each jump: sup over the left limits.
        let eps = (x.abs() * 1e-12).max(1e-300);
        let d_left = (ecdf.eval(x - eps) - target.cdf1(x)?).abs();
        worst = worst.max(d_left);
    }
    Ok(worst)
}

/// One bin of an imbalance report.
#[derive(Debug, Clone, Serialize)]
pub struct BinReport {
    pub lo: f64,
    pub hi: f64,
    /// Empirical probability of the bin.
    pub p_hat: f64,
    /// Target probability of the bin.
    pub p0: f64,
    /// |p_hat/p0 − 1|, absent for off-support bins.
    pub deviation: Option<f64>,
    /// Bin has (numerically) zero target mass but positive empirical mass.
    pub off_support: bool,
}

/// Result of an (alpha, beta) imbalance query over a covariate partition.
#[derive(Debug, Clone, Serialize)]
pub struct ImbalanceReport {
    pub alpha: f64,
    pub beta: f64,
    pub bins: Vec<BinReport>,
    /// True iff some union of bins with target mass >= beta deviates by
    /// more than alpha.
    pub flagged: bool,
    /// A maximal-deviation qualifying union (greedy over bins sorted by
    /// deviation), empty when not flagged.
    pub worst_set: Vec<(f64, f64)>,
    /// Deviation of `worst_set`, when flagged.
    pub worst_deviation: Option<f64>,
    /// Total empirical mass falling in off-support bins.
    pub off_support_mass: f64,
    /// The verdict only quantifies over unions of the supplied partition
    /// bins, which under-approximates a supremum over arbitrary sets.
    pub note: String,
}

const OFF_SUPPORT_EPS: f64 = 1e-12;

/// Quantify imbalance of `sample`'s first covariate against `target` over
/// a partition of disjoint intervals.
///
/// The verdict is true iff some union of partition bins carries target
/// mass at least `beta` while its empirical/target probability ratio
/// deviates from 1 by more than `alpha`.
pub fn imbalance_report(
    sample: &Sample,
    target: &TargetDensity,
    partition: &[(f64, f64)],
    alpha: f64,
    beta: f64,
) -> Result<ImbalanceReport> {
    if partition.is_empty() {
        return Err(invalid("partition must have at least one interval"));
    }
    if sample.n() == 0 {
        return Err(Error::TooFewRows {
            context: "imbalance_report",
            needed: 1,
            got: 0,
        });
    }
    let mut sorted = partition.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sorted.windows(2) {
        if w[0].1 > w[1].0 {
            return Err(invalid(format!(
                "partition intervals overlap: [{}, {}] and [{}, {}]",
                w[0].0, w[0].1, w[1].0, w[1].1
            )));
        }
    }
    for &(lo, hi) in &sorted {
        if !(lo < hi) {
            return Err(invalid(format!("empty partition interval [{lo}, {hi}]")));
        }
    }

    let values = sample.x_col(0);
    let n = values.len() as f64;
    let max_edge = sorted.last().unwrap().1;

    let mut bins = Vec::with_capacity(sorted.len());
    for &(lo, hi) in &sorted {
        // Right edge goes to the last bin, matching histogram convention.
        let count = values
            .iter()
            .filter(|&&v| v >= lo && (v < hi || (v == hi && hi == max_edge)))
            .count();
        let p_hat = count as f64 / n;
        let p0 = target_mass(target, lo, hi)?;
        let off_support = p0 < OFF_SUPPORT_EPS && p_hat > 0.0;
        let deviation = if p0 >= OFF_SUPPORT_EPS {
            Some((p_hat / p0 - 1.0).abs())
        } else {
            None
        };
        bins.push(BinReport {
            lo,
            hi,
            p_hat,
            p0,
            deviation,
            off_support,
        });
    }

    let off_support_mass: f64 = bins.iter().filter(|b| b.off_support).map(|b| b.p_hat).sum();

    // Greedy qualifying union per deviation direction: bins sorted by how
    // extreme their ratio is, accumulated until the union reaches target
    // mass beta. Mixing over- and under-represented bins would cancel, so
    // each direction is searched separately.
    let mut best: Option<(f64, Vec<usize>)> = None;
    for over in [true, false] {
        let mut candidates: Vec<usize> = (0..bins.len())
            .filter(|&i| {
                !bins[i].off_support
                    && bins[i].deviation.is_some()
                    && if over {
                        bins[i].p_hat >= bins[i].p0
                    } else {
                        bins[i].p_hat < bins[i].p0
                    }
            })
            .collect();
        candidates.sort_by(|&a, &b| {
            bins[b]
                .deviation
                .unwrap()
                .total_cmp(&bins[a].deviation.unwrap())
        });
        let mut mass = 0.0;
        let mut p_hat = 0.0;
        let mut chosen = Vec::new();
        for &i in &candidates {
            mass += bins[i].p0;
            p_hat += bins[i].p_hat;
            chosen.push(i);
            if mass >= beta {
                break;
            }
        }
        if mass >= beta && !chosen.is_empty() {
            let deviation = (p_hat / mass - 1.0).abs();
            if deviation > alpha {
                let replace = match &best {
                    None => true,
                    Some((d, _)) => deviation > *d,
                };
                if replace {
                    best = Some((deviation, chosen));
                }
            }
        }
    }

    let (flagged, worst_set, worst_deviation) = match best {
        Some((d, idx)) => (
            true,
            idx.iter().map(|&i| (bins[i].lo, bins[i].hi)).collect(),
            Some(d),
        ),
        None => (false, Vec::new(), None),
    };

    Ok(ImbalanceReport {
        alpha,
        beta,
        bins,
        flagged,
        worst_set,
        worst_deviation,
        off_support_mass,
        note: "verdict restricted to unions of the supplied partition bins".to_string(),
    })
}

/// Partition the target support into `bins` intervals of equal target mass.
pub fn equal_mass_partition(target: &TargetDensity, bins: usize) -> Result<Vec<(f64, f64)>> {
    if bins == 0 {
        return Err(invalid("bin count must be at least 1"));
    }
    let (lo, hi) = target.support1()?;
    let total = target_mass(target, lo, hi)?;
    if total <= 0.0 {
        return Err(Error::Numerical("target has no mass on its support".into()));
    }
    let mut edges = Vec::with_capacity(bins + 1);
    edges.push(lo);
    for k in 1..bins {
        let want = total * k as f64 / bins as f64;
        edges.push(mass_quantile(target, lo, hi, want)?);
    }
    edges.push(hi);
    Ok(edges.windows(2).map(|w| (w[0], w[1])).collect())
}

/// Target mass of an interval via adaptive Simpson quadrature on the pdf
/// (trimmed KDE for kde targets), tolerance 1e-8.
pub fn target_mass(target: &TargetDensity, lo: f64, hi: f64) -> Result<f64> {
    if target.dim() != 1 {
        return Err(Error::DimensionMismatch {
            context: "target_mass",
            expected: 1,
            got: target.dim(),
        });
    }
    if !(lo < hi) {
        return Ok(0.0);
    }
    let f = |x: f64| target.pdf1(x);
    Ok(adaptive_simpson(&f, lo, hi, 1e-8))
}

fn mass_quantile(target: &TargetDensity, lo: f64, hi: f64, want: f64) -> Result<f64> {
    let mut a = lo;
    let mut b = hi;
    // Bisection on the monotone mass function.
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let m = target_mass(target, lo, mid)?;
        if m < want {
            a = mid;
        } else {
            b = mid;
        }
        if (b - a).abs() <= 1e-12 * (hi - lo).abs() {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 40)
}

/// Equal-width histogram counts along one covariate. The right edge of the
/// range falls in the last bin; with an explicit range, values outside are
/// clamped into the edge bins so counts always sum to n.
pub fn histogram(
    sample: &Sample,
    coordinate: usize,
    bins: usize,
    range: Option<(f64, f64)>,
) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(invalid("bin count must be at least 1"));
    }
    if coordinate >= sample.p() {
        return Err(Error::DimensionMismatch {
            context: "histogram coordinate",
            expected: sample.p(),
            got: coordinate,
        });
    }
    let values = sample.x_col(coordinate);
    let mut counts = vec![0usize; bins];
    if values.is_empty() {
        return Ok(counts);
    }
    let (lo, hi) = match range {
        Some((lo, hi)) => {
            if !(lo < hi) {
                return Err(invalid("histogram range must be non-empty"));
            }
            (lo, hi)
        }
        None => {
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
    };
    let width = hi - lo;
    for &v in values {
        let idx = if width == 0.0 {
            0
        } else {
            (((v - lo) / width) * bins as f64).floor() as isize
        };
        let idx = idx.clamp(0, bins as isize - 1) as usize;
        counts[idx] += 1;
    }
    Ok(counts)
}
