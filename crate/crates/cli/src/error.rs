use ktbench_baselines::BaselineError;
use ktbench_core::DataError;
use ktbench_harness::HarnessError;
use ktbench_models::ModelError;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Divergence(String),

    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Check(_) => 5,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Divergence(_) => "divergence",
            CliError::Check(_) => "check",
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        let message = e.to_string();
        if e.is_divergence() {
            CliError::Divergence(message)
        } else if e.is_data() || matches!(e.root(), HarnessError::Io { .. } | HarnessError::Format { .. }) {
            CliError::Data(message)
        } else if matches!(e.root(), HarnessError::Config(_)) {
            CliError::Usage(message)
        } else {
            CliError::Check(message)
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Config(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) | ModelError::UnknownTag { .. } => CliError::Usage(e.to_string()),
            other => HarnessError::from(other).into(),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        HarnessError::from(e).into()
    }
}

pub(crate) fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
