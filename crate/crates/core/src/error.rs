use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The physical scenario cannot be represented on the given grid.
    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// The conic program is structurally inconsistent.
    #[error("invalid program: {0}")]
    InvalidProgram(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
