use std::path::PathBuf;

/// Errors produced by the inference procedures, harnesses and I/O layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two actions from different action spaces were combined.
    #[error("mismatched action spaces: {0}")]
    Mismatch(String),

    /// A CSV or JSON input did not match its schema.
    #[error("ingestion error: {0}")]
    Ingest(String),

    /// An experiment configuration was rejected.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn check_level(name: &str, level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        domain(format!("{name} must lie in (0, 1), got {level}"))
    }
}
