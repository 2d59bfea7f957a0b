use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate feature name `{0}`")]
    DuplicateFeature(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("missing value for feature `{0}`")]
    MissingField(String),

    #[error("feature `{feature}`: `{value}` is not one of the declared levels")]
    UnknownLevel { feature: String, value: String },

    #[error("feature `{feature}`: cannot parse `{value}` as a number")]
    NotNumeric { feature: String, value: String },

    #[error("feature `{feature}`: `{value}` is not a binary value")]
    NotBinary { feature: String, value: String },

    #[error("row {row}, column {column}: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("header mismatch: {0}")]
    Header(String),

    #[error("no records")]
    NoRecords,

    #[error("training data contains a single class")]
    SingleClass,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("invalid cohort spec: {0}")]
    InvalidCohort(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("model format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
