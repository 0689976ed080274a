use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the synthesis pipeline.
#[derive(Debug, Error)]
pub enum BeamError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("target region contains no angular grid samples")]
    DegenerateRegion,

    #[error(
        "dense dictionary needs {required_bytes} bytes, above the {cap_bytes}-byte cap; use factored storage"
    )]
    Capacity { required_bytes: u64, cap_bytes: u64 },

    #[error(
        "spacing constraint exhausted the candidate pool after {achieved} of {requested} ports"
    )]
    InfeasibleSpacing { achieved: usize, requested: usize },

    #[error("degenerate beam: {0}")]
    DegenerateBeam(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("scheme {scheme}")]
    Scheme {
        scheme: String,
        #[source]
        source: Box<BeamError>,
    },
}

impl BeamError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        BeamError::Parameter(msg.into())
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        BeamError::Io {
            context: context.into(),
            source,
        }
    }

    /// Strips any scheme context and returns the underlying error.
    pub fn root(&self) -> &BeamError {
        match self {
            BeamError::Scheme { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = BeamError> = std::result::Result<T, E>;
