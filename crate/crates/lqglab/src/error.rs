use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A kernel or density was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs are structurally valid but violate a configuration rule
    /// (grid too small, mismatched specs, missing marked points, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical precondition failed at run time (empty window, band too
    /// wide, separation violated, unreachable endpoints, ...).
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("unreachable: no path between the requested endpoints")]
    Unreachable,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
