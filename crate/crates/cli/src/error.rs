use oligoicp_core::backend::BackendError;
use oligoicp_core::config::ConfigError;
use oligoicp_core::dataio::DataError;
use oligoicp_core::ensemble::EnsembleError;
use oligoicp_core::evalcal::EvalError;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const PARSE: i32 = 3;
    pub const BACKEND: i32 = 4;
    pub const VALIDATION: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Validation(String),
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Parse(e.to_string())
    }
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } => exit::IO,
            Self::Parse(_) => exit::PARSE,
            Self::Validation(_) => exit::VALIDATION,
            Self::Data(e) => data_code(e),
            Self::Config(e) => match e {
                ConfigError::Read { .. } => exit::IO,
                ConfigError::Parse { .. } => exit::PARSE,
                ConfigError::Invalid(_) => exit::VALIDATION,
                ConfigError::Backend(b) => backend_code(b),
            },
            Self::Backend(e) => backend_code(e),
            Self::Ensemble(e) => match e {
                EnsembleError::Model { .. } | EnsembleError::AllDataModel(_) => exit::BACKEND,
                EnsembleError::Backend(b) => backend_code(b),
                _ => exit::VALIDATION,
            },
            Self::Eval(e) => match e {
                EvalError::Backend(b) => backend_code(b),
                _ => exit::VALIDATION,
            },
        }
    }
}

fn data_code(e: &DataError) -> i32 {
    match e {
        DataError::Io(_) => exit::IO,
        DataError::InvalidSynthConfig(_) => exit::VALIDATION,
        _ => exit::PARSE,
    }
}

fn backend_code(e: &BackendError) -> i32 {
    match e {
        BackendError::InvalidInput(_) | BackendError::DimensionMismatch { .. } => exit::VALIDATION,
        _ => exit::BACKEND,
    }
}
