//! End-to-end experiment harness: synthesize a population, draw disjoint
//! test/balanced/imbalanced samples, rebalance the imbalanced one, train
//! the learners on every variant, and score them on the held-out test
//! sample. Multi-replicate runs repeat the drawing and training with
//! independent sub-streams over a fixed population.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{TargetDensity, TargetSpec};
use crate::diagnostics::ks_to_target;
use crate::error::{invalid, Error, Result};
use crate::generators::GeneratorSpec;
use crate::models::{rmse, FittedModel, ModelKind};
use crate::pipeline::{run_dawr, run_wr, PipelineSpec, WrKdeSource};
use crate::sample::Sample;
use crate::seed::SeedSpec;

/// Mean function of the response law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MeanFn {
    /// sin(scale·x + shift) + offset.
    Sin { scale: f64, shift: f64, offset: f64 },
    Linear { slope: f64, intercept: f64 },
    Constant { value: f64 },
}

impl MeanFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            MeanFn::Sin {
                scale,
                shift,
                offset,
            } => (scale * x + shift).sin() + offset,
            MeanFn::Linear { slope, intercept } => slope * x + intercept,
            MeanFn::Constant { value } => *value,
        }
    }

    /// Parse `sin:a,b,c` (=> sin(a·x + b) + c), `linear:a,b`, `const:c`.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| invalid(format!("bad mean spec `{s}`")))?;
        let nums: Vec<f64> = rest
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| invalid(format!("bad number `{t}` in mean spec")))
            })
            .collect::<Result<_>>()?;
        match (kind, nums.as_slice()) {
            ("sin", [a, b, c]) => Ok(MeanFn::Sin {
                scale: *a,
                shift: *b,
                offset: *c,
            }),
            ("linear", [a, b]) => Ok(MeanFn::Linear {
                slope: *a,
                intercept: *b,
            }),
            ("const", [c]) => Ok(MeanFn::Constant { value: *c }),
            _ => Err(invalid(format!("bad mean spec `{s}`"))),
        }
    }
}

/// Response law: mean function plus Gaussian noise. `noise_is_variance`
/// reads the noise parameter as a variance rather than a standard
/// deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseLaw {
    pub mean: MeanFn,
    pub noise: f64,
    #[serde(default)]
    pub noise_is_variance: bool,
}

impl ResponseLaw {
    pub fn sd(&self) -> f64 {
        if self.noise_is_variance {
            self.noise.sqrt()
        } else {
            self.noise
        }
    }
}

/// Full configuration of a synthetic study.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    /// Population size n_p.
    pub population_size: usize,
    /// Size n of each of the test / balanced / imbalanced samples.
    pub sample_size: usize,
    /// Covariate law of the population; also the rebalancing target.
    pub target: TargetDensity,
    /// Draw-weight law for the imbalanced sample.
    pub bias: TargetDensity,
    pub response: ResponseLaw,
    /// DA generators to compare (may be empty).
    pub generators: Vec<GeneratorSpec>,
    /// DA pool size N.
    pub da_size: usize,
    /// Rebalanced sample size n*.
    pub n_star: usize,
    pub preliminary_wr: bool,
    pub wr_kde_source: WrKdeSource,
    pub models: Vec<ModelKind>,
}

impl Default for ExperimentSpec {
    /// The built-in demo study: Beta(5,5) population of 10,000 with
    /// response sin(7x − 0.5) + 10 plus N(0, 0.1²) noise; Beta(9,9) draw
    /// weights; samples of 1,000.
    fn default() -> Self {
        Self {
            population_size: 10_000,
            sample_size: 1_000,
            target: TargetDensity::Beta {
                alpha: 5.0,
                beta: 5.0,
            },
            bias: TargetDensity::Beta {
                alpha: 9.0,
                beta: 9.0,
            },
            response: ResponseLaw {
                mean: MeanFn::Sin {
                    scale: 7.0,
                    shift: -0.5,
                    offset: 10.0,
                },
                noise: 0.1,
                noise_is_variance: false,
            },
            generators: Vec::new(),
            da_size: 4_000,
            n_star: 1_000,
            preliminary_wr: false,
            wr_kde_source: WrKdeSource::Synthetic,
            models: vec![ModelKind::Spline, ModelKind::Forest],
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sample_size == 0 || self.population_size == 0 {
            return Err(invalid("population and sample sizes must be positive"));
        }
        if self.sample_size * 3 > self.population_size {
            return Err(invalid(format!(
                "sample size {} too large: test, balanced and imbalanced draws \
                 must fit disjointly in the population of {}",
                self.sample_size, self.population_size
            )));
        }
        if self.da_size == 0 || self.n_star == 0 {
            return Err(invalid("da_size and n_star must be positive"));
        }
        Ok(())
    }
}

/// One scored row of a study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub replicate: usize,
    /// Training-sample label: balanced, imbalanced, wr, or a generator label.
    pub label: String,
    pub model: String,
    pub rmse: f64,
    /// KS distance between the training covariate and the target law.
    pub ks_to_target: f64,
}

/// Long-format results keyed by (replicate, label, model).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("replicate,label,model,rmse,ks_to_target\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.replicate, row.label, row.model, row.rmse, row.ks_to_target
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_csv_string()).map_err(|e| Error::Io {
            path: path.as_ref().to_path_buf(),
            source: e,
        })
    }

    /// RMSE values for a (label, model) pair across replicates.
    pub fn rmse_series(&self, label: &str, model: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.label == label && r.model == model)
            .map(|r| r.rmse)
            .collect()
    }
}

/// Draw the population: x from the target law, y from the response law.
pub fn synthesize_population(spec: &ExperimentSpec, seed: SeedSpec) -> Result<Sample> {
    spec.validate()?;
    let mut rng = seed.rng();
    let sd = spec.response.sd();
    let normal = rand_distr::Normal::new(0.0, 1.0).map_err(|e| invalid(format!("{e}")))?;
    let mut xs = Vec::with_capacity(spec.population_size);
    let mut ys = Vec::with_capacity(spec.population_size);
    for _ in 0..spec.population_size {
        let x = spec.target.sample1(&mut rng)?;
        let eps: f64 = rand_distr::Distribution::sample(&normal, &mut rng);
        xs.push(x);
        ys.push(spec.response.mean.eval(x) + sd * eps);
    }
    Sample::univariate(xs, ys)
}

/// Weighted draw of `n` rows WITHOUT replacement, weights proportional to
/// the bias density at each row's covariates. Returns the drawn sample and
/// the untouched remainder (both in original row order).
pub fn draw_biased_sample(
    population: &Sample,
    bias: &TargetDensity,
    n: usize,
    seed: SeedSpec,
) -> Result<(Sample, Sample)> {
    let weight_of = |row: &[f64]| bias.pdf(row);
    draw_without_replacement(population, n, seed, weight_of)
}

/// Simple random sample of `n` rows without replacement (uniform weights).
pub fn draw_uniform_sample(
    population: &Sample,
    n: usize,
    seed: SeedSpec,
) -> Result<(Sample, Sample)> {
    draw_without_replacement(population, n, seed, |_| 1.0)
}

/// Exponential-keys weighted sampling without replacement: row i gets key
/// −ln(1 − U_i) / w_i and the n smallest keys win. Deterministic given the
/// seed; rows with zero weight are never drawn.
fn draw_without_replacement(
    population: &Sample,
    n: usize,
    seed: SeedSpec,
    weight_of: impl Fn(&[f64]) -> f64,
) -> Result<(Sample, Sample)> {
    use rand::Rng;
    let total = population.n();
    if n > total {
        return Err(invalid(format!(
            "cannot draw {n} rows from a population of {total}"
        )));
    }
    let mut rng = seed.rng();
    let mut keys = Vec::with_capacity(total);
    let mut row = vec![0.0; population.p()];
    let mut positive = 0usize;
    for i in 0..total {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = population.x_col(j)[i];
        }
        let w = weight_of(&row);
        let u: f64 = rng.random();
        let key = if w > 0.0 {
            -(1.0 - u).ln() / w
        } else {
            f64::INFINITY
        };
        if key.is_finite() {
            positive += 1;
        }
        keys.push((key, i));
    }
    if positive < n {
        return Err(invalid(format!(
            "only {positive} rows have positive draw weight; cannot draw {n}"
        )));
    }
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut drawn_idx: Vec<usize> = keys[..n].iter().map(|&(_, i)| i).collect();
    drawn_idx.sort_unstable();
    let mut in_drawn = vec![false; total];
    for &i in &drawn_idx {
        in_drawn[i] = true;
    }
    let rest_idx: Vec<usize> = (0..total).filter(|&i| !in_drawn[i]).collect();
    Ok((
        population.select_rows(&drawn_idx),
        population.select_rows(&rest_idx),
    ))
}

const GRID_SIZE: usize = 2001;

/// Run the full single-shot study and score every (label, model) pair.
pub fn run_illustration(spec: &ExperimentSpec, seed: SeedSpec) -> Result<ResultTable> {
    spec.validate()?;
    let population = synthesize_population(spec, seed.stream(0))?;
    let rows = replicate_body(&population, spec, seed.stream(1), 0)?;
    Ok(ResultTable { rows })
}

/// Repeat the drawing/training body `r` times over one fixed population.
/// Replicate k uses the derived stream k+1, so results are independent of
/// execution order and thread count.
pub fn run_replicates(spec: &ExperimentSpec, r: usize, seed: SeedSpec) -> Result<ResultTable> {
    spec.validate()?;
    if r == 0 {
        return Err(invalid("replicate count must be at least 1"));
    }
    let population = synthesize_population(spec, seed.stream(0))?;
    let mut rows: Vec<ResultRow> = (0..r)
        .into_par_iter()
        .map(|k| replicate_body(&population, spec, seed.stream(1 + k as u64), k))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by(|a, b| {
        (a.replicate, &a.label, &a.model).cmp(&(b.replicate, &b.label, &b.model))
    });
    Ok(ResultTable { rows })
}

fn replicate_body(
    population: &Sample,
    spec: &ExperimentSpec,
    seed: SeedSpec,
    replicate: usize,
) -> Result<Vec<ResultRow>> {
    // Draw order: test, balanced, imbalanced — each from the remainder of
    // the previous draw, so the three are disjoint.
    let (test, rest) = draw_uniform_sample(population, spec.sample_size, seed.stream(0))?;
    let (balanced, rest) = draw_uniform_sample(&rest, spec.sample_size, seed.stream(1))?;
    let (imbalanced, _) = draw_biased_sample(&rest, &spec.bias, spec.sample_size, seed.stream(2))?;

    let wr = run_wr(&imbalanced, &spec.target, spec.n_star, seed.stream(3))?;

    let mut training: Vec<(String, Sample)> = vec![
        ("balanced".to_string(), balanced),
        ("imbalanced".to_string(), imbalanced.clone()),
        ("wr".to_string(), wr),
    ];
    for (j, generator) in spec.generators.iter().enumerate() {
        let pipeline = PipelineSpec {
            generator: generator.clone(),
            da_size: spec.da_size,
            n_star: spec.n_star,
            preliminary_wr: spec.preliminary_wr,
            bandwidth: crate::density::BandwidthRule::Silverman,
            trim: crate::density::TrimRule::Default,
            wr_kde_source: spec.wr_kde_source,
        };
        let out = run_dawr(&imbalanced, &spec.target, &pipeline, seed.stream(4 + j as u64))?;
        training.push((generator.label(), out));
    }

    let mut rows = Vec::with_capacity(training.len() * spec.models.len());
    for (li, (label, sample)) in training.iter().enumerate() {
        let ks = ks_to_target(sample.x_col(0), &spec.target, GRID_SIZE)?;
        for (mi, &model) in spec.models.iter().enumerate() {
            let model_seed = seed.stream(1000 + (li * 64 + mi) as u64);
            let fitted = FittedModel::fit_default(model, sample, model_seed)?;
            let preds = fitted.predict(&test);
            let score = rmse(test.y(), &preds)?;
            rows.push(ResultRow {
                replicate,
                label: label.clone(),
                model: model.name().to_string(),
                rmse: score,
                ks_to_target: ks,
            });
        }
    }
    Ok(rows)
}

/// JSON configuration file for the CLI.
///
/// Top-level keys: population, bias, samples, generators, pipeline,
/// models, replicates, seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    pub population: PopulationConfig,
    /// Target spec string for the draw-weight law, e.g. `beta:9,9`.
    pub bias: String,
    pub samples: SamplesConfig,
    #[serde(default)]
    pub generators: Vec<GeneratorSpec>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub size: usize,
    /// Target spec string for the covariate law, e.g. `beta:5,5`.
    pub x: String,
    pub response: ResponseConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseConfig {
    /// Mean spec string, e.g. `sin:7,-0.5,10`.
    pub mean: String,
    pub sigma: f64,
    #[serde(default)]
    pub noise_is_variance: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplesConfig {
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct PipelineConfig {
    /// DA pool size N; defaults to 4·n.
    pub big_n: Option<usize>,
    /// Output size n*; defaults to n.
    pub n_star: Option<usize>,
    #[serde(default)]
    pub pre_wr: bool,
    #[serde(default)]
    pub wr_kde_source: WrKdeSource,
}

fn default_models() -> Vec<ModelKind> {
    vec![ModelKind::Spline, ModelKind::Forest]
}

fn default_replicates() -> usize {
    1
}

impl Config {
    pub fn parse_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(format!("bad config JSON: {e}")))
    }

    /// Resolve into an [`ExperimentSpec`]. Config laws must be analytic
    /// (the population has to be drawable).
    pub fn to_spec(&self) -> Result<ExperimentSpec> {
        let target: TargetSpec = self.population.x.parse()?;
        let bias: TargetSpec = self.bias.parse()?;
        let mean = MeanFn::parse(&self.population.response.mean)?;
        let n = self.samples.n;
        let spec = ExperimentSpec {
            population_size: self.population.size,
            sample_size: n,
            target: target.into_density()?,
            bias: bias.into_density()?,
            response: ResponseLaw {
                mean,
                noise: self.population.response.sigma,
                noise_is_variance: self.population.response.noise_is_variance,
            },
            generators: self.generators.clone(),
            da_size: self.pipeline.big_n.unwrap_or_else(|| PipelineSpec::default_da_size(n)),
            n_star: self.pipeline.n_star.unwrap_or(n),
            preliminary_wr: self.pipeline.pre_wr,
            wr_kde_source: self.pipeline.wr_kde_source,
            models: self.models.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}
