use std::path::PathBuf;

/// Errors produced anywhere in the decomposition pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller violated a precondition (bad dimensions, zero vector, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// A tensor entry left the configured magnitude cap.
    #[error("degenerate state: entry {value} exceeds cap {cap}")]
    Overflow { value: i64, cap: i32 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Data read back did not pass re-verification.
    #[error("corrupt data: {0}")]
    Corruption(String),

    /// Binary checkpoint header or payload is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// A checkpoint or certificate does not match the requested problem size.
    #[error("incompatible: {0}")]
    Incompatible(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("search failed: {0}")]
    Search(String),

    /// Oracle search space exceeds the configured budget.
    #[error("budget exceeded: search space {space} > budget {budget}")]
    Budget { space: f64, budget: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
