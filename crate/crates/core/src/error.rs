use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A temporal-difference error or parameter update left the finite range.
    #[error("divergence: {what} = {value} (step {step})")]
    Divergence {
        what: &'static str,
        value: f64,
        step: usize,
    },

    #[error("pinball geometry: {0}")]
    Geometry(String),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid mdp: {0}")]
    InvalidMdp(String),

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("run {run}: {source}")]
    Run {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }

    /// True for failures raised while training (as opposed to bad input).
    pub fn is_training_abort(&self) -> bool {
        match self {
            Error::Divergence { .. } | Error::Geometry(_) => true,
            Error::Run { source, .. } => source.is_training_abort(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
