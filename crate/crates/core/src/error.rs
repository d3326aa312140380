use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("structural error: {0}")]
    Structure(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("insufficient data: need at least {needed} valid correspondences, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("rank-deficient shape system ({0}); use a nonzero ridge")]
    RankDeficient(String),

    #[error("empty session: no fitted frames")]
    EmptySession,

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("cutoff error: high cut {high_hz} Hz must be below Nyquist {nyquist_hz} Hz")]
    Cutoff { high_hz: f64, nyquist_hz: f64 },

    #[error("signal too short: {found} samples, need more than {needed}")]
    Length { needed: usize, found: usize },

    #[error("stage error: expected a {expected} signal, found {found}")]
    Stage {
        expected: &'static str,
        found: &'static str,
    },

    #[error("format error at line {line}: {message}")]
    Format { line: u64, message: String },

    #[error("range error at line {line}: {message}")]
    Range { line: u64, message: String },

    #[error("ordering error: {0}")]
    Ordering(String),

    #[error("unsupported schema version `{found}` (expected `{expected}`)")]
    Version {
        found: String,
        expected: &'static str,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }
}

/// Pipeline stage that produced an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Load,
    Fit,
    Signal,
    Filter,
    Quantify,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Load => "load",
            Stage::Fit => "fit",
            Stage::Signal => "signal",
            Stage::Filter => "filter",
            Stage::Quantify => "quantify",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
#[error("stage `{stage}`: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> std::result::Result<T, PipelineError>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> std::result::Result<T, PipelineError> {
        self.map_err(|source| PipelineError { stage, source })
    }
}
