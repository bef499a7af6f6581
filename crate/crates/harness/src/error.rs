use std::path::PathBuf;

use ktbench_autodiff::EngineError;
use ktbench_baselines::BaselineError;
use ktbench_core::DataError;
use ktbench_models::ModelError;
use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {message}")]
    Divergence {
        epoch: usize,
        batch: usize,
        message: String,
    },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<HarnessError>,
    },

    #[error("data leakage: {0}")]
    Leakage(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

impl HarnessError {
    /// The error with any fold tags removed.
    pub fn root(&self) -> &HarnessError {
        match self {
            HarnessError::Fold { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_divergence(&self) -> bool {
        matches!(
            self.root(),
            HarnessError::Divergence { .. }
                | HarnessError::Model(ModelError::Engine(EngineError::Divergence { .. }))
                | HarnessError::Baseline(BaselineError::Divergence(_))
        )
    }

    pub fn is_data(&self) -> bool {
        matches!(
            self.root(),
            HarnessError::Data(_)
                | HarnessError::Baseline(BaselineError::Data(_) | BaselineError::EmptyTraining | BaselineError::SingleClass)
                | HarnessError::Model(ModelError::Data(_) | ModelError::TooShort { .. })
        )
    }

    pub(crate) fn in_fold(self, fold: usize) -> Self {
        HarnessError::Fold {
            fold,
            source: Box::new(self),
        }
    }
}
