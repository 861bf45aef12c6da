use thiserror::Error;

/// Every fallible operation in the lab reports one of these.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no observed data: {0}")]
    NoData(String),
    #[error("degenerate design: {0}")]
    Degenerate(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("did not converge: {0}")]
    NonConvergence(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error at {path}: {message}")]
    Io { path: String, message: String },
    #[error("run aborted: {0}")]
    Abort(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::InvalidArgument(msg.into()))
}

pub(crate) fn require_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        invalid(format!("{name} must be finite, got {x}"))
    }
}
