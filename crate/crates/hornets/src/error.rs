use std::path::PathBuf;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] hornets_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Malformed CSV; `line` is 1-based and counts the header.
    #[error("{origin}:{line}: {message}")]
    Parse {
        origin: String,
        line: u64,
        message: String,
    },
    #[error("{origin}: {message}")]
    Format { origin: String, message: String },
    #[error("{0}")]
    Usage(String),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for usage and configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        use hornets_core::Error as E;
        match self {
            AppError::Usage(_) => 2,
            AppError::Core(E::Config(_) | E::Stratification { .. }) => 2,
            _ => 1,
        }
    }
}
