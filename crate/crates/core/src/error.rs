use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

/// One problem found while validating a user-supplied instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum CfxError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("invalid instance: {}", format_fields(.0))]
    InvalidInstance(Vec<FieldError>),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("backward called before forward on {0}")]
    NoForwardCache(&'static str),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss component `{0}`")]
    NonFiniteLoss(String),

    #[error("training diverged at epoch {0}")]
    Diverged(usize),

    #[error("t-SNE diverged at iteration {0}")]
    TsneDiverged(usize),

    #[error("perplexity search produced a non-finite entropy for row {0}")]
    Bisection(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("model bundle error: {0}")]
    Bundle(String),

    #[error("model not frozen")]
    NotFrozen,
}

fn format_fields(errors: &[FieldError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = CfxError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CfxError {
    let path = path.into();
    move |source| CfxError::Io { path, source }
}
