use thiserror::Error;

use aoi_energy::Error as CoreError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_STRUCTURE: i32 = 4;
pub const EXIT_TRUNCATION: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("structural violation: {0}")]
    Structure(String),

    #[error("truncation inadequate: {0}")]
    Truncation(String),

    #[error("at {point}: {source}")]
    AtPoint {
        point: String,
        #[source]
        source: Box<CliError>,
    },

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn at(point: impl Into<String>, err: impl Into<CliError>) -> Self {
        CliError::AtPoint {
            point: point.into(),
            source: Box::new(err.into()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::File { .. } | CliError::Csv(_) | CliError::Json(_) => {
                EXIT_USAGE
            }
            CliError::Structure(_) => EXIT_STRUCTURE,
            CliError::Truncation(_) => EXIT_TRUNCATION,
            CliError::AtPoint { source, .. } => source.exit_code(),
            CliError::Core(e) => match e {
                CoreError::NotConverged { .. } => EXIT_NOT_CONVERGED,
                CoreError::NotThreshold { .. } | CoreError::ShortCircuitMismatch(_) => {
                    EXIT_STRUCTURE
                }
                CoreError::BoundaryMass { .. } => EXIT_TRUNCATION,
                CoreError::InvalidParams(_)
                | CoreError::InvalidState { .. }
                | CoreError::Parse(_)
                | CoreError::Io(_)
                | CoreError::Csv(_)
                | CoreError::Json(_) => EXIT_USAGE,
                _ => EXIT_FAILURE,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
