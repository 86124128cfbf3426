use std::path::PathBuf;

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on `{path}`: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("column `{column}` declared in the schema is missing from `{path}`")]
    MissingColumn { column: String, path: PathBuf },

    #[error("data row {row}, column `{column}`: `{value}` is not a finite number")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("{context}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("covariate column `{0}` has zero variance")]
    DegenerateColumn(String),

    #[error("all drawing weights are zero; the target density has no mass on the sample")]
    ZeroWeights,

    #[error("drawing weight sum underflowed ({0:e}); cannot normalize")]
    WeightUnderflow(f64),

    #[error("{context}: need at least {needed} rows, sample has {got}")]
    TooFewRows {
        context: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Whether this error stems from bad user input (as opposed to a
    /// runtime/numerical failure). The CLI maps validation errors to exit
    /// code 1 and everything else to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MissingColumn { .. }
                | Error::BadCell { .. }
                | Error::DimensionMismatch { .. }
                | Error::DegenerateColumn(_)
                | Error::TooFewRows { .. }
                | Error::InvalidInput(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
