use thiserror::Error;

/// Errors surfaced by the library.
///
/// `Config` covers everything that can be rejected before any compute starts
/// (bad specs, bad files-on-paper, invalid parameters); the remaining variants
/// are runtime failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid model spec: {0}")]
    Spec(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("training failure: {0}")]
    Train(String),

    #[error("codec error: {0}")]
    Codec(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that should map to CLI exit code 1 (config problems);
    /// everything else is a runtime failure (exit code 2).
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Spec(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
