use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("street graph is disconnected: node {to} unreachable from node {from}")]
    Disconnected { from: usize, to: usize },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("city generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: usize, reason: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("degenerate network: no demand is served by any connected pair")]
    DegenerateNetwork,

    #[error("illegal action: {0}")]
    IllegalAction(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("missing normalization statistics")]
    MissingNormStats,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("training aborted: {0}")]
    TrainingAborted(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
}

impl Error {
    /// Stable snake-case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Disconnected { .. } => "disconnected",
            Error::InvalidMatrix(_) => "invalid_matrix",
            Error::InvalidParams(_) => "invalid_params",
            Error::GenerationFailed { .. } => "generation_failed",
            Error::InvalidNetwork(_) => "invalid_network",
            Error::DegenerateNetwork => "degenerate_network",
            Error::IllegalAction(_) => "illegal_action",
            Error::Contract(_) => "contract",
            Error::NonFinite(_) => "non_finite",
            Error::MissingNormStats => "missing_norm_stats",
            Error::Checkpoint(_) => "checkpoint",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::TrainingAborted(_) => "training_aborted",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
