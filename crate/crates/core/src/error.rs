use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unparseable cell at row {row}, column '{column}': {value:?}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("dataset has zero rows")]
    Empty,
    #[error("non-binary {what}: value {value} at row {row}")]
    NonBinary {
        what: &'static str,
        row: usize,
        value: f64,
    },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("degenerate split fraction {fraction} for {rows} rows")]
    DegenerateSplit { fraction: f64, rows: usize },
    #[error("empty subgroup: {0}")]
    EmptySubgroup(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite gradient component at index {0}")]
    NonFiniteGradient(usize),
    #[error("non-finite loss at iteration {iteration}, task '{task}'")]
    NonFiniteLoss { iteration: usize, task: String },
    #[error("unknown column in shift: '{0}'")]
    UnknownShiftColumn(String),
    #[error("attempt cap exceeded: {0}")]
    AttemptCap(String),
    #[error("insufficient shifts: every outcome was {0}")]
    SingleOutcome(&'static str),
    #[error("no features left after screening")]
    NoFeatures,
    #[error("unknown {kind} '{name}' (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
