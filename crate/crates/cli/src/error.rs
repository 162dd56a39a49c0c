use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Data(String),

    #[error("{path}:{line}: {message}")]
    Spec {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Numerical(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 usage (including paths that cannot be read or written), 3 data,
    /// 4 numerical.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Data(_) | CliError::Spec { .. } => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<classgain::Error> for CliError {
    fn from(e: classgain::Error) -> Self {
        use classgain::Error as E;
        match e {
            E::TooLarge { .. } => CliError::Usage(e.to_string()),
            E::Numerical(_) | E::DegenerateSource => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
