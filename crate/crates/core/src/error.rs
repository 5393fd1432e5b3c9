use thiserror::Error;

/// Errors produced by the gapkit estimators and constructors.
#[derive(Debug, Error)]
pub enum GapError {
    /// A parameter is outside its admissible domain (h <= 0, q <= 1, ...).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// The computation is undefined for this input (e.g. log 0 from duplicate points).
    #[error("domain error: {0}")]
    Domain(String),

    /// A construction cannot be carried out on this input.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Input exceeds the supported problem size.
    #[error("size error: {0}")]
    Size(String),

    /// A guaranteed post-condition failed to hold on the computed output.
    #[error("post-condition violated: {0}")]
    PostCondition(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, GapError>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(GapError::Parameter(msg.into()))
}
