use std::path::PathBuf;

use ktbench_autodiff::EngineError;
use ktbench_core::DataError;
use thiserror::Error;

pub type Result<T, E = BaselineError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("training data is empty")]
    EmptyTraining,

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("unknown baseline `{0}`")]
    UnknownBaseline(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Engine(#[from] EngineError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
