use kickecho::bipartite::BipartiteError;
use kickecho::echo::EchoError;
use kickecho::linalg::LinalgError;
use kickecho::reduced::ReducedError;
use kickecho::rmt::RmtError;
use kickecho::rotor::RotorError;
use thiserror::Error;

use crate::fit::FitError;

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error(transparent)]
    Rotor(#[from] RotorError),
    #[error(transparent)]
    Echo(#[from] EchoError),
    #[error(transparent)]
    Rmt(#[from] RmtError),
    #[error(transparent)]
    Reduced(#[from] ReducedError),
    #[error(transparent)]
    Bipartite(#[from] BipartiteError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Physics {
        context: String,
        #[source]
        source: PhysicsError,
    },
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ScanError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ScanError::Config(_) => 2,
            ScanError::Physics { .. } => 3,
            ScanError::Io { .. } => 1,
        }
    }
}

/// Attaches a description of the failing step to a physics-layer error.
pub trait Context<T> {
    fn context<S: Into<String>>(self, what: impl FnOnce() -> S) -> Result<T, ScanError>;
}

impl<T, E: Into<PhysicsError>> Context<T> for Result<T, E> {
    fn context<S: Into<String>>(self, what: impl FnOnce() -> S) -> Result<T, ScanError> {
        self.map_err(|e| ScanError::Physics { context: what().into(), source: e.into() })
    }
}
