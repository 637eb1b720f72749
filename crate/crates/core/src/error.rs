use std::path::PathBuf;

use crate::analysis::EdgeFitResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resolution mismatch: {a} ps vs {b} ps")]
    ResolutionMismatch { a: u64, b: u64 },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),

    #[error("no correlation peak")]
    NoCorrelationPeak,

    #[error("cannot build timeline: {0}")]
    Timeline(String),

    #[error(
        "overlapping line segments: trigger {index} follows after {spacing_ps} ps, \
         at least {required_ps} ps required"
    )]
    OverlappingSegments {
        index: usize,
        spacing_ps: i64,
        required_ps: i64,
    },

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("empty {0} region")]
    EmptyRegion(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("fit did not converge after {iterations} iterations (gradient {gradient:.3e})")]
    FitDidNotConverge {
        iterations: usize,
        gradient: f64,
        best: Box<EdgeFitResult>,
    },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::ResolutionMismatch { .. }
            | Error::Format(_)
            | Error::Io { .. }
            | Error::Stream(_)
            | Error::Timeline(_)
            | Error::OverlappingSegments { .. }
            | Error::DimensionMismatch { .. } => 3,
            Error::NoCorrelationPeak
            | Error::EmptyRegion(_)
            | Error::Degenerate(_)
            | Error::FitDidNotConverge { .. } => 4,
        }
    }
}
