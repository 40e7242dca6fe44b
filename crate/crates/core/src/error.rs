use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "power iteration did not converge after {iterations} iterations (last estimate {estimate})"
    )]
    SpectralNormNotConverged { iterations: usize, estimate: f64 },

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    SolveNotConverged { iterations: usize, residual: f64 },

    #[error("system is singular: connected component containing node {first_node} ({size} nodes) has no observed features")]
    UnobservedComponent { first_node: usize, size: usize },

    #[error("non-finite value encountered at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("unknown objective kind `{0}`")]
    UnknownObjective(String),

    #[error("objective `{0}` requires a mask")]
    MissingMask(&'static str),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("no known entries to compute a mean from")]
    NoKnownEntries,

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed {file} at line {line}: {message}")]
    Malformed {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("label {label} on line {line} is out of range for {classes} classes")]
    LabelOutOfRange {
        line: usize,
        label: usize,
        classes: usize,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
