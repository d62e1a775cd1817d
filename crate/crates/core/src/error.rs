use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("integration diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("training diverged at epoch {epoch} (last finite loss {last_loss:e})")]
    TrainingDiverged { epoch: usize, last_loss: f64 },

    #[error("{what} produced a non-finite objective at iteration {iteration}")]
    NonFinite { what: &'static str, iteration: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("failed to load {path}: field `{field}`: {msg}")]
    Load {
        path: PathBuf,
        field: String,
        msg: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
