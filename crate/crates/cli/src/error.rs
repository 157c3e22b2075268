use std::path::PathBuf;

use revrank::explicit::ExplicitError;
use revrank::implicit::ImplicitError;
use revrank::simulator::SimError;
use revrank::{DataError, MetricError};
use thiserror::Error;

/// Process exit codes.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Degenerate(#[from] MetricError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Degenerate(_) => EXIT_DEGENERATE,
            CliError::Io { .. } => EXIT_IO,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Degenerate(_) => "degenerate_metric",
            CliError::Io { .. } => "io",
        }
    }
}

/// Attaches the offending path to data errors so I/O failures stay distinct.
pub fn data_error(path: &std::path::Path, e: DataError) -> CliError {
    match e {
        DataError::Io(source) => CliError::io(path, source),
        other => CliError::Validation(format!("{}: {other}", path.display())),
    }
}

pub fn metric_or_validation(e: MetricError) -> CliError {
    match e {
        MetricError::NonFinite { .. } | MetricError::InvalidTemperature(_) => CliError::Validation(e.to_string()),
        other => CliError::Degenerate(other),
    }
}

impl From<ExplicitError> for CliError {
    fn from(e: ExplicitError) -> Self {
        match e {
            ExplicitError::Metric(m) => metric_or_validation(m),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ImplicitError> for CliError {
    fn from(e: ImplicitError) -> Self {
        match e {
            ImplicitError::Metric(m) => metric_or_validation(m),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Metric(m) => metric_or_validation(m),
            SimError::Data(DataError::Io(source)) => CliError::io("<simulator>", source),
            other => CliError::Validation(other.to_string()),
        }
    }
}
