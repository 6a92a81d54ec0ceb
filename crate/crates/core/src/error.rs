use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains no data rows")]
    EmptyDataset,

    #[error("unknown column `{column}` in header")]
    UnknownColumn { column: String },

    #[error("required column `{column}` is missing from the header")]
    MissingColumn { column: String },

    #[error("column `{column}` appears more than once in the header")]
    DuplicateColumn { column: String },

    #[error("row {row}: expected {expected} cells, found {found}")]
    RowArity {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column `{column}`: empty cell (missing values are not allowed)")]
    EmptyCell { row: usize, column: String },

    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    NotNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: unknown level `{value}`")]
    UnknownLevel {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: value {value} is outside {range}")]
    OutOfRange {
        row: usize,
        column: String,
        value: f64,
        range: String,
    },

    #[error("csv syntax error: {0}")]
    Csv(String),

    #[error("coupon {coupon} is below the money market rate {rate}")]
    NegativeSpread { coupon: f64, rate: f64 },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("dataset does not match the data the forest was trained on")]
    DatasetMismatch,

    #[error("no observation was out of bag in any tree")]
    NoOobCoverage,

    #[error("response has zero variance; R² is undefined")]
    ZeroVariance,

    #[error("fold {fold} has {size} rows; at least 2 are required")]
    FoldTooSmall { fold: usize, size: usize },

    #[error("dataset has {n} rows; at least {min} are required")]
    TooFewRows { n: usize, min: usize },

    #[error("design matrix is rank deficient; dependent columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("{rows} rows cannot determine {columns} coefficients")]
    Underdetermined { rows: usize, columns: usize },

    #[error("model file: {0}")]
    Model(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Coarse classification used by front ends to pick an exit status.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io(_) => ErrorCategory::Io,
            Error::Invariant(_) => ErrorCategory::Internal,
            _ => ErrorCategory::Validation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Io,
    Internal,
}
