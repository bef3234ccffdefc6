use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    #[error("enumeration would visit {count} supports, above the cap of {cap}")]
    CapExceeded { count: String, cap: u64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("signal length {n} is not divisible by {by}")]
    NotDivisible { n: usize, by: usize },

    #[error("empty column set")]
    EmptyColumns,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
