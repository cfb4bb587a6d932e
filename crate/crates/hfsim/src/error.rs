use thiserror::Error;

/// Errors shared by every subsystem of the crate.
///
/// The CLI maps these onto exit codes: configuration and argument problems
/// exit 2, domain failures (lookup misses, malformed blobs, exceeded
/// capacities, protocol violations) exit 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("format error: {0}")]
    FormatError(String),

    #[error("capacity exceeded: {0}")]
    CapacityExceeded(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn protocol(msg: impl Into<String>) -> Self {
        Error::ProtocolViolation(msg.into())
    }

    pub fn not_found(msg: impl Into<String>) -> Self {
        Error::NotFound(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::FormatError(msg.into())
    }

    pub fn capacity(msg: impl Into<String>) -> Self {
        Error::CapacityExceeded(msg.into())
    }
}
