use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("discovery did not converge after {iters} outer iterations (h(W) = {h:.3e})")]
    NoConvergence { iters: usize, h: f64 },

    #[error("graph error: {0}")]
    Graph(String),

    #[error("refinement edit #{index} ({edit}) failed: {reason}")]
    Refinement { index: usize, edit: String, reason: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("training error: {0}")]
    Training(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable process exit code for each error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) => 3,
            Error::NoConvergence { .. } => 4,
            Error::Graph(_) | Error::Refinement { .. } => 5,
            Error::Shape(_) | Error::Model(_) => 6,
            Error::Diverged { .. } | Error::Training(_) => 7,
            Error::Io { .. } => 8,
        }
    }
}
