use thiserror::Error;

/// Errors produced by the library.
///
/// The variants are coarse on purpose: callers (the CLI in particular) map
/// them onto exit codes, so each variant corresponds to one failure class.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of bounds: {0}")]
    Bounds(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("capacity exceeded: {what} needs {requested} entries, limit is {limit}")]
    Capacity {
        what: &'static str,
        requested: usize,
        limit: usize,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("linear algebra backend failure: {0}")]
    Backend(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn bounds(msg: impl Into<String>) -> Self {
        Error::Bounds(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}
