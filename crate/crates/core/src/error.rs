use std::io;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A factorization failed, an iterate became non-finite, or a solver
    /// could not reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Input that admits no meaningful answer (all-zero data, missing
    /// classes, impossible split requests, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A file or in-memory structure violates its format.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// Failure inside one layer of the greedy cascade (1-based index).
    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateInput(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn in_layer(self, layer: usize) -> Self {
        match self {
            e @ Error::Layer { .. } => e,
            e => Error::Layer {
                layer,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, skipping layer tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Layer { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
