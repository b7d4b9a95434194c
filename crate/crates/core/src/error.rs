use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("form degree {found} does not match membrane dimension {expected}")]
    DegreeMismatch { expected: usize, found: usize },

    #[error("field mismatch: {0}")]
    FieldMismatch(String),

    #[error("membrane is not closed: {0}")]
    NotClosed(String),

    #[error("base points differ: {0}")]
    BasePointMismatch(String),

    #[error("reparametrization is not monotonic: {0}")]
    NotMonotonic(String),

    #[error("exact engine requires polynomial input: {0}")]
    NotPolynomial(String),

    #[error("invalid engine configuration: {0}")]
    InvalidConfig(String),

    #[error("homotopy family violates its invariants: {0}")]
    InvalidFamily(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error at `{field}`: {message}")]
    Validation { field: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}
