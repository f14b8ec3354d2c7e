use gtspec_core::Error;
use thiserror::Error;

/// Failures of a run, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                Error::Domain(_) | Error::Format(_) | Error::Degenerate(_) => 2,
                Error::NonConvergence(_) | Error::UnresolvableBoundary => 3,
                Error::Inconsistency(_) => 4,
            },
        }
    }
}
