//! Composition of the resampling steps.
//!
//! `run_wr` is the one-step pipeline: fit a KDE on the sample covariates,
//! weight every row by target/estimated density, and resample whole rows.
//! `run_dawr` inserts a data-augmentation step first: a generator produces
//! N synthetic rows, the KDE is refitted on the synthetic covariates, and
//! the final weighted resampling draws from the synthetic pool — so the
//! output support can extend beyond the observed one. An optional
//! preliminary WR pass can rebalance the sample before the generator sees
//! it.
//!
//! Sub-steps derive fixed child streams from the caller's seed:
//! preliminary WR = 0, data augmentation = 1, final WR draw = 2.

use serde::{Deserialize, Serialize};

use crate::density::{fit_kde, BandwidthRule, KdeModel, TargetDensity, TrimRule};
use crate::error::{invalid, Result};
use crate::generators::{generate, GeneratorSpec};
use crate::resampling::{compute_weights, weighted_resample, DrawWeights};
use crate::sample::Sample;
use crate::seed::SeedSpec;

const PRELIMINARY_STREAM: u64 = 0;
const DA_STREAM: u64 = 1;
const WR_STREAM: u64 = 2;

/// Which data the WR-step KDE is fitted on inside `run_dawr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WrKdeSource {
    /// Refit on the synthetic covariates (the weights then describe the
    /// synthetic pool's own density).
    #[default]
    Synthetic,
    /// Reuse the KDE fitted on the original sample.
    Original,
}

/// Configuration of the augmentation pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub generator: GeneratorSpec,
    /// DA pool size N.
    pub da_size: usize,
    /// Output size n*.
    pub n_star: usize,
    /// Run a preliminary WR pass before the generator.
    pub preliminary_wr: bool,
    pub bandwidth: BandwidthRule,
    pub trim: TrimRule,
    pub wr_kde_source: WrKdeSource,
}

impl PipelineSpec {
    /// Defaults: no preliminary pass, full-covariance bandwidth, default
    /// trimming, KDE refit on the synthetic pool.
    pub fn new(generator: GeneratorSpec, da_size: usize, n_star: usize) -> Self {
        Self {
            generator,
            da_size,
            n_star,
            preliminary_wr: false,
            bandwidth: BandwidthRule::Silverman,
            trim: TrimRule::Default,
            wr_kde_source: WrKdeSource::Synthetic,
        }
    }

    /// Default DA pool size when unspecified: 4·n. Larger pools reduce
    /// duplicate draws in the final resampling step.
    pub fn default_da_size(n: usize) -> usize {
        4 * n
    }

    fn validate(&self) -> Result<()> {
        if self.da_size == 0 {
            return Err(invalid("da_size (N) must be at least 1"));
        }
        if self.n_star == 0 {
            return Err(invalid("n_star must be at least 1"));
        }
        Ok(())
    }
}

/// Intermediate products of a WR run.
#[derive(Debug, Clone)]
pub struct WrStages {
    pub kde: KdeModel,
    pub weights: DrawWeights,
    pub output: Sample,
}

/// One-step weighted resampling toward `target`, drawing `n_star` rows.
pub fn run_wr(
    sample: &Sample,
    target: &TargetDensity,
    n_star: usize,
    seed: SeedSpec,
) -> Result<Sample> {
    wr_stages(sample, target, n_star, seed).map(|s| s.output)
}

/// As [`run_wr`], also returning the fitted KDE and the weights.
pub fn wr_stages(
    sample: &Sample,
    target: &TargetDensity,
    n_star: usize,
    seed: SeedSpec,
) -> Result<WrStages> {
    let kde = fit_kde(sample, BandwidthRule::Silverman, TrimRule::Default)?;
    let weights = compute_weights(sample, target, &kde)?;
    let output = weighted_resample(sample, &weights, n_star, seed.stream(WR_STREAM))?;
    Ok(WrStages {
        kde,
        weights,
        output,
    })
}

/// Intermediate products of a DA-WR run.
#[derive(Debug, Clone)]
pub struct DawrStages {
    /// The synthetic pool produced by the DA step (N rows).
    pub synthetic: Sample,
    /// WR-step weights over the synthetic pool.
    pub weights: DrawWeights,
    pub output: Sample,
}

/// Two-step pipeline: data augmentation, then weighted resampling from the
/// synthetic pool. The final step is always a WR step.
pub fn run_dawr(
    sample: &Sample,
    target: &TargetDensity,
    spec: &PipelineSpec,
    seed: SeedSpec,
) -> Result<Sample> {
    dawr_stages(sample, target, spec, seed).map(|s| s.output)
}

/// As [`run_dawr`], also returning the synthetic pool and its weights.
pub fn dawr_stages(
    sample: &Sample,
    target: &TargetDensity,
    spec: &PipelineSpec,
    seed: SeedSpec,
) -> Result<DawrStages> {
    spec.validate()?;

    let generator_input = if spec.preliminary_wr {
        run_wr(sample, target, sample.n(), seed.stream(PRELIMINARY_STREAM))?
    } else {
        sample.clone()
    };

    let synthetic = generate(
        &spec.generator,
        &generator_input,
        spec.da_size,
        seed.stream(DA_STREAM),
    )?;

    let kde = match spec.wr_kde_source {
        WrKdeSource::Synthetic => fit_kde(&synthetic, spec.bandwidth.clone(), spec.trim)?,
        WrKdeSource::Original => fit_kde(sample, spec.bandwidth.clone(), spec.trim)?,
    };
    let weights = compute_weights(&synthetic, target, &kde)?;
    let output = weighted_resample(&synthetic, &weights, spec.n_star, seed.stream(WR_STREAM))?;

    Ok(DawrStages {
        synthetic,
        weights,
        output,
    })
}
