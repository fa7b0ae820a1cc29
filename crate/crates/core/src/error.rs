use std::path::PathBuf;

/// Error type shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A text input could not be parsed. Carries the file and 1-based line number.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A domain invariant was violated (bad interval, weight sum, config value, ...).
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// A (view, rate) cell required for model voting is absent.
    #[error("missing score trace for video '{video_id}': view={view}, rate={rate}")]
    MissingTrace {
        video_id: String,
        view: String,
        rate: u32,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn parse(path: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            msg: msg.into(),
        }
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: parse errors, invariant errors and
    /// i/o errors map to distinct codes.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } => 2,
            Error::Invariant(_) | Error::MissingTrace { .. } => 3,
            Error::Io { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
