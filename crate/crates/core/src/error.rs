use std::io;

use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("empty cluster {0}")]
    EmptyCluster(usize),

    #[error("coincident barycenters for clusters {0} and {1}")]
    CoincidentBarycenters(usize, usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable identifier, used in machine-readable CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid-grid",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::InsufficientData(_) => "insufficient-data",
            Error::DegenerateTarget(_) => "degenerate-target",
            Error::EmptyCluster(_) => "empty-cluster",
            Error::CoincidentBarycenters(..) => "coincident-barycenters",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
