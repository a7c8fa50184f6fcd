use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error: {message} ({})", columns.join(", "))]
    Schema { message: String, columns: Vec<String> },

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("infeasible control matching: need {needed} controls, only {available} available (shortfall {})", needed - available)]
    InfeasibleMatching { needed: usize, available: usize },

    #[error("cohort has no cases")]
    NoCases,

    #[error("column '{0}' is entirely missing; no imputation statistic is defined")]
    AllMissing(String),

    #[error("feature '{0}' has zero variance")]
    ZeroVariance(String),

    #[error("row {0} has zero norm and cannot be normalized")]
    ZeroNorm(usize),

    #[error("cannot embed empty text")]
    EmptyText,

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Diverged {
        epoch: usize,
        /// Parameters at the end of the last finite epoch.
        last_good: Box<crate::align::AlignmentModel>,
    },

    #[error("only one class present; at least one case and one control are required")]
    SingleClass,

    #[error("SVM solver did not converge after {iterations} iterations (KKT residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("unknown subject id '{0}'")]
    UnknownSubject(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::Shape {
            expected: expected.into(),
            got: got.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
