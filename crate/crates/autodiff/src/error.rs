use thiserror::Error;

pub type Result<T, E = EngineError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged: non-finite gradient for parameter `{param}`")]
    Divergence { param: String },

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EngineError {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        EngineError::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
