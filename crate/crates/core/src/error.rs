use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Arguments outside an operation's domain (e.g. `a >= log2 d` for the
    /// transience threshold search).
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed configuration or model designation.
    #[error("config error: {0}")]
    Config(String),

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
