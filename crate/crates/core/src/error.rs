use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("log map undefined: rotation angle {angle} rad is at or beyond the principal branch limit")]
    BranchAmbiguity { angle: f64 },

    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("smoothing problem is ill-posed: {0}")]
    IllPosed(String),

    #[error("step {step} has {pairs} correspondence pairs, at least 3 required")]
    DegenerateStep { step: usize, pairs: usize },

    #[error("degenerate geometry in step {step}: point configuration is collinear")]
    DegenerateGeometry { step: usize },

    #[error("insufficient motion: {0}")]
    InsufficientMotion(String),

    #[error("insufficient tracks: {kept} left, at least {required} required")]
    InsufficientTracks { kept: usize, required: usize },

    #[error("all tracks removed by the {0} filter")]
    EmptyResult(&'static str),

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),
}

impl Error {
    /// Stable machine-readable identifier for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::BranchAmbiguity { .. } => "branch_ambiguity",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Io { .. } => "io",
            Error::IllPosed(_) => "ill_posed",
            Error::DegenerateStep { .. } => "degenerate_step",
            Error::DegenerateGeometry { .. } => "degenerate_geometry",
            Error::InsufficientMotion(_) => "insufficient_motion",
            Error::InsufficientTracks { .. } => "insufficient_tracks",
            Error::EmptyResult(_) => "empty_result",
            Error::Inconsistent(_) => "internal_inconsistency",
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport {
            kind: self.kind().to_string(),
            message: self.to_string(),
        }
    }
}

/// Serializable form of an [`Error`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
}

pub type Result<T> = std::result::Result<T, Error>;
