use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{name} = {value} is out of range ({expected})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("feature dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown example id {0}")]
    UnknownId(u64),
    #[error("duplicate example id {0}")]
    DuplicateId(u64),
    #[error("label {0} is not binary")]
    NonBinaryLabel(i64),
    #[error("non-finite feature value for example {0}")]
    NonFiniteFeature(u64),
    #[error("score vector does not match dataset ids")]
    IdMismatch,
    #[error("dataset contains a single class; both labels are required")]
    SingleClass,
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("warm-start model spec does not match the requested spec")]
    WarmStartMismatch,
    #[error("degenerate covariance scale {0}")]
    DegenerateCovariance(f64),
    #[error("ensemble requires at least one model")]
    EmptyEnsemble,
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("evaluation hygiene violated: {0}")]
    Hygiene(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
