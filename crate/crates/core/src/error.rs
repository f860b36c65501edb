use thiserror::Error;

/// Errors produced by dataset loading, splitting, training, and reporting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid label schema: {0}")]
    InvalidSchema(String),
    #[error("row count mismatch: texts file has {texts} rows, annotations file has {annotations}")]
    RowCountMismatch { texts: usize, annotations: usize },
    #[error("non-integer cell at row {row}, column {col}: {value:?}")]
    NonIntegerCell { row: usize, col: usize, value: String },
    #[error("label out of range at row {row}, column {col}: {label} not in [{min}, {max}]")]
    LabelOutOfRange { row: usize, col: usize, label: i32, min: i32, max: i32 },
    #[error("item {item} has zero annotations")]
    EmptyRow { item: usize },
    #[error("duplicate cell at item {item}, annotator {annotator}")]
    DuplicateCell { item: usize, annotator: usize },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("holdout fraction {fraction} is infeasible: {reason}")]
    InfeasibleHoldout { fraction: f64, reason: String },
    #[error("{0}")]
    EmptyInput(String),
    #[error("need at least 3 distinct disagreement rates, got {0}")]
    TooFewDistinctRates(usize),

    #[error("non-finite loss at epoch {epoch} with hyperparameters {hyper}")]
    NonFiniteLoss { epoch: usize, hyper: String },
    #[error("all {0} grid combinations failed to train")]
    AllCombosFailed(usize),

    #[error("malformed prompt version {version:?}: {reason}")]
    MalformedVersion { version: String, reason: String },
    #[error("unknown placeholder {{{0}}} in skeleton {1:?}")]
    UnknownPlaceholder(String, String),
    #[error("completion cache miss for prompt hash {0}")]
    CacheMiss(String),
    #[error("completion request failed: {0}")]
    CompletionRequest(String),
    #[error("auth token environment variable {0:?} is not set")]
    MissingAuthToken(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures caused by malformed or inconsistent input data.
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::AllCombosFailed(_)
        )
    }

    /// True for numeric failures during training.
    pub fn is_numeric_error(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::AllCombosFailed(_)
        )
    }
}
