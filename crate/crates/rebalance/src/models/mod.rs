//! Downstream regression learners and scoring, used to measure the effect
//! of rebalancing on prediction quality.

mod forest;
mod spline;

pub use forest::{fit_forest, ForestModel, ForestParams};
pub use spline::{fit_spline, SplineModel};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sample::Sample;
use crate::seed::SeedSpec;

/// Model roster entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Spline,
    Forest,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Spline => "spline",
            ModelKind::Forest => "forest",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spline" => Ok(ModelKind::Spline),
            "forest" => Ok(ModelKind::Forest),
            other => Err(invalid(format!("unknown model `{other}`"))),
        }
    }
}

// Hyperparameters used by the experiment harness and the CLI.
pub const SPLINE_KNOTS: usize = 20;
pub const SPLINE_LAMBDA: f64 = 1e-4;

/// A fitted learner of either kind.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Spline(SplineModel),
    Forest(ForestModel),
}

impl FittedModel {
    /// Fit `kind` with the harness defaults (20 knots / λ = 1e-4 for the
    /// spline; 200 trees, depth 8, min leaf 5 for the forest).
    pub fn fit_default(kind: ModelKind, train: &Sample, seed: SeedSpec) -> Result<Self> {
        match kind {
            ModelKind::Spline => Ok(FittedModel::Spline(fit_spline(
                train,
                SPLINE_KNOTS,
                SPLINE_LAMBDA,
            )?)),
            ModelKind::Forest => Ok(FittedModel::Forest(fit_forest(
                train,
                ForestParams::default(),
                seed,
            )?)),
        }
    }

    pub fn predict(&self, sample: &Sample) -> Vec<f64> {
        match self {
            FittedModel::Spline(m) => m.predict(sample.x_col(0)),
            FittedModel::Forest(m) => m.predict(sample),
        }
    }
}

/// Root mean square error: sqrt(Σ (y − ŷ)² / n).
pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            context: "rmse vectors",
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::TooFewRows {
            context: "rmse",
            needed: 1,
            got: 0,
        });
    }
    let sum: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sum / y_true.len() as f64).sqrt())
}
