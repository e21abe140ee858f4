use fuselab_core::data::DataError;
use fuselab_core::metrics::MetricError;
use fuselab_core::model::ModelError;
use fuselab_core::tensor::TensorError;
use fuselab_core::train::TrainError;
use thiserror::Error;

/// Command failure, split by the process exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config, inputs, or incompatible artifacts. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Failure while running valid work: I/O, non-finite training, failed verification. Exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Config(_) | DataError::Range { .. } | DataError::Shape(_) | DataError::Format { .. } => {
                CliError::Validation(e.to_string())
            }
            DataError::Io(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::NonFinite { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Tensor(t) => t.into(),
            ModelError::Data(d) => d.into(),
            ModelError::Io(_) => CliError::Runtime(e.to_string()),
            ModelError::Config(_) | ModelError::Format { .. } => CliError::Validation(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Validation(e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Tensor(t) => t.into(),
            TrainError::NonFinite { .. } | TrainError::Io(_) => CliError::Runtime(format!("training aborted: {e}")),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Io(_) => CliError::Runtime(e.to_string()),
            MetricError::Data(d) => d.into(),
            MetricError::Shape(_) | MetricError::Undefined(_) => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {e}"))
    }
}
