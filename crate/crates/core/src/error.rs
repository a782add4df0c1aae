use std::io;

use thiserror::Error;

/// Errors surfaced by the solvers and file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("singularity: {0}")]
    Singularity(String),
    #[error("did not converge: {0}")]
    NonConvergence(String),
    #[error("diverged: {0}")]
    Divergence(String),
    #[error("point is not covered by the fan: {0}")]
    NotInFan(String),
    #[error("empty region: {0}")]
    EmptyRegion(String),
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Parse(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
