use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Fit,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid factor {name}={value}: {reason}")]
    InvalidFactor {
        name: &'static str,
        value: i32,
        reason: &'static str,
    },

    #[error("invalid ratio {0}: must lie in [0, 1]")]
    InvalidRatio(String),

    #[error("stage ratios out of order: r1={r1} must be < r2={r2}")]
    SplitOrdering { r1: String, r2: String },

    #[error("infeasible stage split: r={r} is outside [{r1}, {r2}]")]
    InfeasibleSplit { r1: String, r2: String, r: String },

    #[error("no model shape for f_M={0} (supported: -1..=5)")]
    UnsupportedScale(i32),

    #[error("model complexity {complexity} is >= 1.1e8, batch sizing is undefined there")]
    UnsupportedModel { complexity: u64 },

    #[error("optimal local batch size rounds to 0 at C={compute:e}")]
    MinimumBatch { compute: f64 },

    #[error("setup needs {required} high-resource tokens but only {available} are available")]
    InsufficientCorpus { required: u64, available: u64 },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation error at {location}: {message}")]
    Validation { location: String, message: String },

    #[error("unknown setup id `{0}`")]
    UnknownSetup(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("category nesting violated for group (f_C={f_c}, f_D={f_d}); membership is inconsistent")]
    NestingViolation { f_c: i32, f_d: i32 },

    #[error("underdetermined fit: need at least {needed} distinct abscissae, got {got}")]
    Underdetermined { needed: usize, got: usize },

    #[error("shift exponent is unidentifiable: curves span a single compute budget")]
    Unidentifiable,

    #[error("degenerate ratio group (M={m:e}, D={d:e}): needs at least 2 distinct r values")]
    DegenerateGroup { m: f64, d: f64 },

    #[error("usage: {0}")]
    Usage(String),

    #[error("refusing to overwrite {0} (pass --force)")]
    WouldOverwrite(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Usage(_) | Error::WouldOverwrite(_) => ErrorKind::Usage,
            Error::Underdetermined { .. }
            | Error::Unidentifiable
            | Error::DegenerateGroup { .. } => ErrorKind::Fit,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
