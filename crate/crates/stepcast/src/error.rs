use std::path::PathBuf;

/// Errors surfaced by the command-line layer. Each maps onto a process exit
/// code via [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("config key `{key}`: {reason}")]
    ConfigKey { key: String, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error("missing {what}: {}", path.display())]
    MissingArtifact { what: &'static str, path: PathBuf },
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("{}: line {line}: {reason}", path.display())]
    Line { path: PathBuf, line: usize, reason: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] stepcast_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn exit_code(&self) -> i32 {
        use stepcast_core::Error as C;
        match self {
            Error::MissingArtifact { .. } => 2,
            Error::Numerical(_) => 3,
            Error::Core(C::NonFiniteGradient(_) | C::NonFiniteLoss { .. }) => 3,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
