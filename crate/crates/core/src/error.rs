use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {}", .0.join("; "))]
    InvalidInstance(Vec<String>),

    #[error("{operation} requires the {expected} uncached-path model")]
    WrongModel {
        operation: &'static str,
        expected: &'static str,
    },

    #[error("enumeration needs {required} candidates, cap is {cap} (raise --max-enum)")]
    EnumerationCap { required: u128, cap: u128 },

    #[error("instance is not one-file-per-user: {0}")]
    NotOneFilePerUser(String),

    #[error("two-cache solver needs exactly 2 caches, instance has {0}")]
    NotTwoCaches(usize),

    #[error("LP relaxation returned a fractional placement: x[file {file}][cache {cache}] = {value}")]
    NonIntegralRelaxation { file: usize, cache: usize, value: f64 },

    #[error("linear program is {0}")]
    Lp(&'static str),

    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    #[error("equal-cardinality partition needs an even, non-empty element count, got {0}")]
    OddPartition(usize),

    #[error("trace line {line}: {message}")]
    TraceParse { line: usize, message: String },

    #[error("trace segment is empty")]
    EmptySegment,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
