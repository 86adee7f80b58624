use thiserror::Error;

pub type Result<T, E = AfapeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AfapeError {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid dataset: {0}")]
    Data(String),

    #[error("row {row}: superfeature `{superfeature}` is only partially observed")]
    PartialObservation { row: usize, superfeature: String },

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid missingness mechanism: {0}")]
    Mechanism(String),

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("propensity cannot be evaluated: {0}")]
    Inevaluable(String),

    #[error("dataset contains no complete cases")]
    NoCompleteCases,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("trajectory count overflows for m = {0}")]
    Overflow(u64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AfapeError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        AfapeError::InvalidArgument(msg.into())
    }
}
