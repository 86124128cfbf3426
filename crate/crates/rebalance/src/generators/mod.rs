//! Synthetic-data generators.
//!
//! Each generator produces `n_out` synthetic rows with the source sample's
//! column structure, treating the joint (x, y, aux) space uniformly: the
//! response and auxiliaries are generated exactly like covariates. Any
//! generator can additionally be run per-cluster after a Gaussian-mixture
//! clustering of the joint data.

mod copula;
mod factor;
mod gmm;
mod perturb;
mod smote;

pub use copula::{fit_copula, sample_copula, CopulaModel};
pub use factor::{fit_fa, sample_fa, FaFit, FaModel};
pub use gmm::{fit_gmm, fit_gmm_detail, sample_gmm, GmmFit, GmmModel};
pub use perturb::{
    gen_gaussian_noise, gen_smoothed_bootstrap, gen_smoothed_bootstrap_with_cov, BootstrapRule,
};
pub use smote::gen_smote;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sample::Sample;
use crate::seed::SeedSpec;

/// Base generator family and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum GeneratorKind {
    /// Pass the source rows through unchanged (row i mod n). The limiting
    /// case of every perturbation generator; useful for stability checks.
    #[serde(rename = "identity")]
    Identity,
    /// Seed row plus independent Gaussian noise with per-column variance
    /// `delta · σ̂²`.
    #[serde(rename = "gn")]
    GaussianNoise { delta: f64 },
    /// Smoothed bootstrap with the diagonal plug-in bandwidth.
    #[serde(rename = "rose")]
    RoseBootstrap,
    /// Smoothed bootstrap with the full-covariance plug-in bandwidth.
    #[serde(rename = "kde")]
    SilvermanBootstrap,
    /// Interpolation between a seed row and one of its k nearest neighbors.
    #[serde(rename = "smote")]
    Smote { k: usize },
    /// Gaussian mixture fitted on the joint data, then sampled.
    #[serde(rename = "gmm")]
    Gmm { g: usize },
    /// Factor-analysis model fitted on the joint data, then sampled.
    #[serde(rename = "fa")]
    FactorAnalysis { r: usize },
    /// Gaussian copula over empirical marginals.
    #[serde(rename = "copula")]
    Copula,
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::Identity => "identity",
            GeneratorKind::GaussianNoise { .. } => "gn",
            GeneratorKind::RoseBootstrap => "rose",
            GeneratorKind::SilvermanBootstrap => "kde",
            GeneratorKind::Smote { .. } => "smote",
            GeneratorKind::Gmm { .. } => "gmm",
            GeneratorKind::FactorAnalysis { .. } => "fa",
            GeneratorKind::Copula => "copula",
        }
    }
}

/// Cluster-conditioned wrapper configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSpec {
    /// Number of mixture components used for clustering.
    pub g: usize,
}

/// Full generator configuration.
///
/// JSON form: `{"kind":"gn","delta":0.1,"clustered":{"g":3}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clustered: Option<ClusterSpec>,
}

impl GeneratorSpec {
    pub fn plain(kind: GeneratorKind) -> Self {
        Self {
            kind,
            clustered: None,
        }
    }

    pub fn clustered(kind: GeneratorKind, g: usize) -> Self {
        Self {
            kind,
            clustered: Some(ClusterSpec { g }),
        }
    }

    /// Display label, e.g. `gn` or `gn-gmm`.
    pub fn label(&self) -> String {
        match self.clustered {
            Some(_) => format!("{}-gmm", self.kind.name()),
            None => self.kind.name().to_string(),
        }
    }
}

// Default EM settings used when a generator fits a model internally.
pub(crate) const GMM_MAX_ITER: usize = 200;
pub(crate) const GMM_TOL: f64 = 1e-6;
pub(crate) const FA_MAX_ITER: usize = 300;
pub(crate) const FA_TOL: f64 = 1e-7;

/// Run a generator spec: cluster-conditioned when requested, plain
/// otherwise. Returns exactly `n_out` rows.
pub fn generate(
    spec: &GeneratorSpec,
    sample: &Sample,
    n_out: usize,
    seed: SeedSpec,
) -> Result<Sample> {
    match spec.clustered {
        Some(cluster) => gen_cluster_conditioned(spec, cluster, sample, n_out, seed),
        None => generate_base(&spec.kind, sample, n_out, seed),
    }
}

/// Run a base generator (ignoring any clustering directive).
pub fn generate_base(
    kind: &GeneratorKind,
    sample: &Sample,
    n_out: usize,
    seed: SeedSpec,
) -> Result<Sample> {
    match kind {
        GeneratorKind::Identity => {
            if sample.n() == 0 {
                return Err(Error::TooFewRows {
                    context: "identity generator",
                    needed: 1,
                    got: 0,
                });
            }
            let idx: Vec<usize> = (0..n_out).map(|i| i % sample.n()).collect();
            Ok(sample.select_rows(&idx))
        }
        GeneratorKind::GaussianNoise { delta } => gen_gaussian_noise(sample, *delta, n_out, seed),
        GeneratorKind::RoseBootstrap => {
            gen_smoothed_bootstrap(sample, BootstrapRule::Rose, n_out, seed)
        }
        GeneratorKind::SilvermanBootstrap => {
            gen_smoothed_bootstrap(sample, BootstrapRule::Silverman, n_out, seed)
        }
        GeneratorKind::Smote { k } => gen_smote(sample, *k, n_out, seed),
        GeneratorKind::Gmm { g } => {
            let model = fit_gmm(sample, *g, GMM_MAX_ITER, GMM_TOL, seed.stream(0))?;
            sample_gmm(&model, n_out, seed.stream(1))
        }
        GeneratorKind::FactorAnalysis { r } => {
            gen_factor_analysis(sample, *r, n_out, seed)
        }
        GeneratorKind::Copula => {
            let model = fit_copula(sample)?;
            sample_copula(&model, n_out, seed.stream(1))
        }
    }
}

/// Fit a factor model with default EM settings and sample from it.
pub fn gen_factor_analysis(
    sample: &Sample,
    r: usize,
    n_out: usize,
    seed: SeedSpec,
) -> Result<Sample> {
    let fit = fit_fa(sample, r, FA_MAX_ITER, FA_TOL, seed.stream(0))?;
    sample_fa(&fit.model, n_out, seed.stream(1))
}

/// Fit a mixture on the joint data, hard-assign rows to clusters, run the
/// base generator within each cluster, and concatenate. Per-cluster output
/// counts are proportional to cluster sizes (largest-remainder rounding).
pub fn gen_cluster_conditioned(
    spec: &GeneratorSpec,
    cluster: ClusterSpec,
    sample: &Sample,
    n_out: usize,
    seed: SeedSpec,
) -> Result<Sample> {
    if cluster.g == 0 {
        return Err(invalid("cluster count must be at least 1"));
    }
    let clusters = if cluster.g == 1 {
        vec![(0..sample.n()).collect::<Vec<usize>>()]
    } else {
        let model = fit_gmm(sample, cluster.g, GMM_MAX_ITER, GMM_TOL, seed.stream(0))?;
        let assignments = model.hard_assign(sample)?;
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); model.components()];
        for (row, g) in assignments.into_iter().enumerate() {
            groups[g].push(row);
        }
        groups.retain(|g| !g.is_empty());
        merge_small_clusters(sample, groups)
    };

    let sizes: Vec<usize> = clusters.iter().map(Vec::len).collect();
    let alloc = largest_remainder_allocation(&sizes, n_out);

    let mut parts = Vec::with_capacity(clusters.len());
    for (ci, rows) in clusters.iter().enumerate() {
        let sub = sample.select_rows(rows);
        parts.push(generate_base(
            &spec.kind,
            &sub,
            alloc[ci],
            seed.stream(1 + ci as u64),
        )?);
    }
    Sample::concat(&parts)
}

/// Merge clusters with fewer than 2 rows into the nearest cluster by mean
/// distance in joint space.
fn merge_small_clusters(sample: &Sample, mut groups: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    let d = sample.joint_dim();
    loop {
        let Some(small) = groups.iter().position(|g| g.len() < 2) else {
            break;
        };
        if groups.len() == 1 {
            break;
        }
        log::warn!(
            "cluster with {} row(s) merged into its nearest cluster",
            groups[small].len()
        );
        let mean_of = |rows: &[usize]| -> Vec<f64> {
            let mut m = vec![0.0; d];
            let mut buf = vec![0.0; d];
            for &i in rows {
                sample.joint_row_into(i, &mut buf);
                for j in 0..d {
                    m[j] += buf[j];
                }
            }
            for v in &mut m {
                *v /= rows.len().max(1) as f64;
            }
            m
        };
        let small_mean = mean_of(&groups[small]);
        let mut best = None;
        let mut best_dist = f64::INFINITY;
        for (gi, rows) in groups.iter().enumerate() {
            if gi == small {
                continue;
            }
            let m = mean_of(rows);
            let dist: f64 = m
                .iter()
                .zip(&small_mean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist < best_dist {
                best_dist = dist;
                best = Some(gi);
            }
        }
        let target = best.expect("at least two clusters");
        let moved = groups.remove(small);
        let target = if target > small { target - 1 } else { target };
        groups[target].extend(moved);
        groups[target].sort_unstable();
    }
    groups
}

/// Apportion `total` into counts proportional to `sizes`.
fn largest_remainder_allocation(sizes: &[usize], total: usize) -> Vec<usize> {
    let sum: usize = sizes.iter().sum();
    if sum == 0 {
        let mut alloc = vec![0; sizes.len()];
        if let Some(first) = alloc.first_mut() {
            *first = total;
        }
        return alloc;
    }
    let quotas: Vec<f64> = sizes
        .iter()
        .map(|&s| total as f64 * s as f64 / sum as f64)
        .collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for i in 0..(total - assigned) {
        alloc[order[i % order.len()]] += 1;
    }
    alloc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::{ColumnLayout, Sample};

    fn uni(xs: Vec<f64>, ys: Vec<f64>) -> Sample {
        Sample::univariate(xs, ys).unwrap()
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = GeneratorSpec::clustered(GeneratorKind::GaussianNoise { delta: 0.1 }, 3);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"kind":"gn","delta":0.1,"clustered":{"g":3}}"#);
        let back: GeneratorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);

        let plain: GeneratorSpec = serde_json::from_str(r#"{"kind":"smote","k":5}"#).unwrap();
        assert_eq!(plain, GeneratorSpec::plain(GeneratorKind::Smote { k: 5 }));
    }

    #[test]
    fn labels() {
        assert_eq!(
            GeneratorSpec::plain(GeneratorKind::Copula).label(),
            "copula"
        );
        assert_eq!(
            GeneratorSpec::clustered(GeneratorKind::RoseBootstrap, 2).label(),
            "rose-gmm"
        );
    }

    #[test]
    fn identity_cycles_rows() {
        let s = uni(vec![1.0, 2.0], vec![10.0, 20.0]);
        let out = generate_base(&GeneratorKind::Identity, &s, 5, SeedSpec::new(0)).unwrap();
        assert_eq!(out.x_col(0), &[1.0, 2.0, 1.0, 2.0, 1.0]);
        assert_eq!(out.y(), &[10.0, 20.0, 10.0, 20.0, 10.0]);
    }

    #[test]
    fn allocation_is_proportional() {
        assert_eq!(largest_remainder_allocation(&[700, 300], 10), vec![7, 3]);
        assert_eq!(largest_remainder_allocation(&[1, 1, 1], 8), vec![3, 3, 2]);
        assert_eq!(
            largest_remainder_allocation(&[5, 5], 0),
            vec![0, 0],
        );
    }

    #[test]
    fn single_cluster_equals_plain_generator_with_sub_seed() {
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let ys: Vec<f64> = (0..40).map(|i| (i as f64 * 0.11).cos()).collect();
        let s = uni(xs, ys);
        let seed = SeedSpec::new(99);
        let spec = GeneratorSpec::clustered(GeneratorKind::GaussianNoise { delta: 0.05 }, 1);
        let clustered = generate(&spec, &s, 25, seed).unwrap();
        let direct = generate_base(
            &GeneratorKind::GaussianNoise { delta: 0.05 },
            &s,
            25,
            seed.stream(1),
        )
        .unwrap();
        assert_eq!(clustered, direct);
    }

    #[test]
    fn cluster_conditioned_respects_separated_clusters() {
        // Two tight, well-separated clusters. With per-cluster Gaussian
        // noise, no synthetic point should land in the empty middle region
        // beyond 3 cluster-sd of both means.
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut rng_state = 1u64;
        let mut next = || {
            // small LCG for fixture data only
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((rng_state >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        };
        for _ in 0..200 {
            xs.push(0.0 + 0.02 * next());
            ys.push(0.0 + 0.02 * next());
        }
        for _ in 0..200 {
            xs.push(5.0 + 0.02 * next());
            ys.push(5.0 + 0.02 * next());
        }
        let s = uni(xs, ys);
        let spec = GeneratorSpec::clustered(GeneratorKind::GaussianNoise { delta: 0.05 }, 2);
        let out = generate(&spec, &s, 10_000, SeedSpec::new(5)).unwrap();
        assert_eq!(out.n(), 10_000);
        // Cluster sd along x is ~0.0058; 3 sd from both means leaves
        // (1, 4) far inside the forbidden band.
        for i in 0..out.n() {
            let x = out.x_col(0)[i];
            assert!(
                !(1.0..4.0).contains(&x),
                "synthetic x = {x} fell in the empty mid-region"
            );
        }
    }

    #[test]
    fn generators_preserve_column_structure() {
        let layout = ColumnLayout {
            x_names: vec!["x".into()],
            y_name: "y".into(),
            aux_names: vec!["z".into()],
        };
        let n = 60;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 / 10.0).sin()).collect();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 / 7.0).cos() + 2.0).collect();
        let z: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 0.3).collect();
        let s = Sample::new(vec![x], y, vec![z], layout).unwrap();
        let kinds = [
            GeneratorKind::Identity,
            GeneratorKind::GaussianNoise { delta: 0.1 },
            GeneratorKind::RoseBootstrap,
            GeneratorKind::SilvermanBootstrap,
            GeneratorKind::Smote { k: 3 },
            GeneratorKind::Gmm { g: 2 },
            GeneratorKind::FactorAnalysis { r: 1 },
            GeneratorKind::Copula,
        ];
        for kind in kinds {
            let out = generate_base(&kind, &s, 17, SeedSpec::new(3)).unwrap();
            assert_eq!(out.n(), 17, "{kind:?}");
            assert_eq!(out.p(), 1, "{kind:?}");
            assert_eq!(out.n_aux(), 1, "{kind:?}");
            assert_eq!(out.layout(), s.layout(), "{kind:?}");
            let empty = generate_base(&kind, &s, 0, SeedSpec::new(3)).unwrap();
            assert_eq!(empty.n(), 0, "{kind:?}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.17).sin() * 2.0).collect();
        let ys: Vec<f64> = (0..50).map(|i| (i as f64 * 0.29).cos()).collect();
        let s = uni(xs, ys);
        for kind in [
            GeneratorKind::GaussianNoise { delta: 0.2 },
            GeneratorKind::Smote { k: 4 },
            GeneratorKind::Gmm { g: 2 },
            GeneratorKind::Copula,
        ] {
            let a = generate_base(&kind, &s, 30, SeedSpec::new(77)).unwrap();
            let b = generate_base(&kind, &s, 30, SeedSpec::new(77)).unwrap();
            assert_eq!(a, b, "{kind:?}");
        }
    }
}
