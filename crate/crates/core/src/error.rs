use std::path::PathBuf;

use thiserror::Error;

use crate::rgan::TrainTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("contract violated: {0}")]
    Contract(String),

    /// A second derivative was requested through a primitive that only has a
    /// first-order rule.
    #[error("no second-order rule registered for primitive(s): {}", .0.join(", "))]
    Capability(Vec<&'static str>),

    #[error("training diverged at {stage} step {step}: {detail}")]
    Divergence {
        stage: String,
        step: usize,
        detail: String,
        /// Trace records collected before the failure, when training produced any.
        trace: Option<Box<TrainTrace>>,
    },

    #[error("schema error in {path}: {detail}")]
    Schema { path: PathBuf, detail: String },

    #[error("parse error at row {row}, column '{column}': {detail}")]
    Parse {
        row: usize,
        column: String,
        detail: String,
    },

    #[error("budget error: {0}")]
    Budget(String),

    #[error("unknown synthetic dataset '{0}' (known: friedman-like, sinusoid-2d, piecewise-plant)")]
    Catalog(String),

    #[error("degenerate clustering: {0}")]
    Degeneracy(String),

    #[error("ill-conditioned system: {0}")]
    Conditioning(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) | Error::Budget(_) | Error::Catalog(_) => 2,
            Error::Divergence { .. } => 4,
            _ => 3,
        }
    }
}
