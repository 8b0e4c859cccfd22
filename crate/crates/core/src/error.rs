use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the sensing, encoding and training stack.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on shapes, ranges or labels was violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// Power iteration ran out of iterations.
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    /// The channel cannot carry a single latent element per sample.
    #[error(
        "insufficient capacity: {budget_bits:.3} bits per transmission cannot carry {required_bits} bits"
    )]
    InsufficientCapacity { budget_bits: f64, required_bits: u64 },

    /// A NaN or infinity appeared in a tensor, loss or update.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Invalid or unparsable configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed tensor file, manifest or checksum mismatch.
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// An experiment stage failed; wraps the underlying error with the stage name.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Strips any stage wrappers and returns the root cause.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        })
    }
}
