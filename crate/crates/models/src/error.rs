use ktbench_autodiff::EngineError;
use ktbench_core::DataError;
use thiserror::Error;

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid hyperparameters: {0}")]
    Config(String),

    #[error("sequence of student {student} has {len} attempt(s); at least 2 are needed for a target")]
    TooShort { student: usize, len: usize },

    #[error("index {index} out of range (bound {bound})")]
    OutOfBounds { index: usize, bound: usize },

    #[error("unknown {kind} `{value}`; expected one of: {expected}")]
    UnknownTag {
        kind: &'static str,
        value: String,
        expected: String,
    },

    #[error("checkpoint manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Engine(#[from] EngineError),

    #[error(transparent)]
    Data(#[from] DataError),
}
