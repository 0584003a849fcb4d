use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failure of a command. Each variant maps onto one stable exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("output directory {} is locked by another run (remove {} if stale)", .0.display(), .0.join(crate::output::LOCK_NAME).display())]
    Locked(PathBuf),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: drddl::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Short machine-readable category printed as `error[category]`.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } | CliError::Locked(_) => "io",
            CliError::Core { source, .. } => match source.root() {
                drddl::Error::Numerical(_) => "numerical",
                drddl::Error::DegenerateInput(_) => "degenerate",
                drddl::Error::Format(_) => "format",
                drddl::Error::Io(_) => "io",
                drddl::Error::Layer { .. } => unreachable!("root() strips layer tags"),
            },
        }
    }

    /// 2 configuration or unusable input, 3 I/O or malformed files,
    /// 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" | "degenerate" => 2,
            "io" | "format" => 3,
            _ => 4,
        }
    }
}

pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T> Context<T> for drddl::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|source| CliError::Core {
            context: what(),
            source,
        })
    }
}
