use std::path::PathBuf;

use thiserror::Error;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Config => "config",
            ErrorClass::Data => "data",
            ErrorClass::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{column}` has kind {actual}, expected {expected}")]
    ColumnKind {
        column: String,
        expected: &'static str,
        actual: &'static str,
    },

    #[error("column `{0}` has no observed values to impute from")]
    Unimputable(String),

    #[error("column `{0}` has zero standard deviation; prune constant columns before scaling")]
    ZeroVariance(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("row {row} has no value in group column `{column}`")]
    MissingGroup { row: usize, column: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("feature mismatch; offending names: {0:?}")]
    FeatureMismatch(Vec<String>),

    #[error("operation not supported for model kind `{0}`")]
    Unsupported(&'static str),

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Divergence { epoch: usize },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("only {groups} groups available for {folds} folds")]
    FoldInfeasible { groups: usize, folds: usize },

    #[error("treatment `{0}` is fully explained by the covariates (sum of squared residuals below 1e-12)")]
    DegenerateTreatment(String),

    #[error("{features} features exceeds the exact enumeration limit of {limit}; use kernel mode")]
    ShapBudget { features: usize, limit: usize },

    #[error("feature sets do not align; missing: {0:?}")]
    Alignment(Vec<String>),

    #[error("unknown config key `{0}`")]
    UnknownConfigKey(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn at_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::UnknownConfigKey(_) | Error::Config(_) | Error::Json(_) => ErrorClass::Config,
            Error::InvalidParam(_) => ErrorClass::Config,
            Error::Divergence { .. }
            | Error::Singular(_)
            | Error::DegenerateTreatment(_)
            | Error::ZeroVariance(_) => ErrorClass::Numeric,
            Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
