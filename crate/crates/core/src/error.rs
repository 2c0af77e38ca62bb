use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("mapping error: {0}")]
    Mapping(String),
    #[error("linear solve failed for {what} (condition estimate {condition:.3e})")]
    Singular { what: String, condition: f64 },
    #[error("eigensolver failed: {0}")]
    Eigen(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
