use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("window too short: {len} samples cannot support max lag {max_lag} (need more than 4x)")]
    WindowTooShort { len: usize, max_lag: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("wrong curve kind: expected {expected}, got {got}")]
    WrongKind { expected: &'static str, got: &'static str },

    #[error("fit domain error: {0}")]
    FitDomain(String),

    #[error("circulant embedding failed: minimum eigenvalue {min_eigenvalue:.3e} at embedding size {size}")]
    Embedding { min_eigenvalue: f64, size: usize },

    #[error("spec construction failed: {0}")]
    SpecConstruction(String),

    #[error("spectral factorization failed: {0}")]
    Factorization(String),

    #[error("kernel verification did not converge: relative residual {residual:.3e} >= tol {tol:.3e}")]
    NonConvergence { residual: f64, tol: f64 },

    #[error("equilibrium has no absolute scale; supply price and flow variances")]
    MissingScale,

    #[error("ill-conditioned Toeplitz system ({0}); increase the ridge")]
    Conditioning(String),

    #[error("parse error at {path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("ordering error at {path}:{line}: {msg}")]
    Ordering { path: PathBuf, line: usize, msg: String },

    #[error("duplicate key at {path}:{line}: {msg}")]
    DuplicateKey { path: PathBuf, line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse failure classes, mapped onto CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidInput(_)
            | Error::WindowTooShort { .. }
            | Error::Alignment(_)
            | Error::WrongKind { .. }
            | Error::Parse { .. }
            | Error::Ordering { .. }
            | Error::DuplicateKey { .. }
            | Error::Config(_) => ErrorClass::Validation,
            Error::Degenerate(_)
            | Error::FitDomain(_)
            | Error::Embedding { .. }
            | Error::SpecConstruction(_)
            | Error::Factorization(_)
            | Error::NonConvergence { .. }
            | Error::MissingScale
            | Error::Conditioning(_) => ErrorClass::Numerical,
            Error::Io { .. } => ErrorClass::Io,
            Error::Stage { source, .. } => source.class(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Validation => 2,
            ErrorClass::Numerical => 3,
            ErrorClass::Io => 4,
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
