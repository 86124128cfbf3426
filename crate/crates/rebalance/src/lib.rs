//! Rebalancing of regression training samples whose covariates are
//! imbalanced relative to a target distribution.
//!
//! The core operation is weighted resampling: rows are redrawn with
//! probabilities proportional to the ratio between a target covariate
//! density and a (trimmed) kernel estimate of the sample's own density,
//! which drives the covariate law toward the target while leaving the
//! conditional response distribution untouched. A two-step variant first
//! widens the pool with a pluggable synthetic-data generator and then
//! resamples from the synthetic pool, so the output can extend beyond the
//! observed support.
//!
//! The crate also ships diagnostics (KS distances, ratio-deviation
//! imbalance reports), lightweight regression learners for measuring the
//! downstream effect of rebalancing, and a seeded experiment harness. All
//! stochastic operations are pure functions of their inputs and a
//! [`seed::SeedSpec`].

pub mod density;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod generators;
pub mod models;
pub mod pipeline;
pub mod resampling;
pub mod sample;
pub mod seed;

mod util;

pub use error::{Error, Result};
pub use sample::{read_csv, write_csv, ColumnLayout, ColumnSchema, Sample};
pub use seed::SeedSpec;
