use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum FmipError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("parse error in `{field}`: {msg}")]
    Parse { field: String, msg: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("generation error: {0}")]
    Generation(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("training aborted: {0}")]
    Training(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = FmipError> = std::result::Result<T, E>;

pub(crate) fn parse_err(field: impl Into<String>, msg: impl Into<String>) -> FmipError {
    FmipError::Parse {
        field: field.into(),
        msg: msg.into(),
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(FmipError::Dimension { what, expected, got });
    }
    Ok(())
}
