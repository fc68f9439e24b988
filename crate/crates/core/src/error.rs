use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no complete cases: no patient is present in the labels and every selected modality")]
    NoCompleteCases,

    #[error("duplicate patient id `{0}`")]
    DuplicatePatient(String),

    #[error("unknown modality `{0}`")]
    UnknownModality(String),

    #[error("invalid survival record for `{id}`: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid probability mass function: {0}")]
    InvalidPmf(String),

    #[error("C-index undefined: no comparable pairs")]
    CIndexUndefined,

    #[error("C-index undefined in fold {fold}: no comparable pairs among held-out patients")]
    FoldCIndexUndefined { fold: usize },

    #[error(
        "Cox model did not converge: coefficient {index} ({value:.3e}) diverges (monotone likelihood / separation)"
    )]
    CoxSeparation { index: usize, value: f64 },

    #[error("Cox model did not converge after {iterations} iterations (largest update on coefficient {index})")]
    CoxNoConvergence { iterations: usize, index: usize },

    #[error("singular information matrix")]
    SingularMatrix,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
