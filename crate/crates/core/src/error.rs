use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the age-of-information library.
///
/// The variant names are part of the CLI contract: they are printed verbatim
/// so that scripts can branch on them.
#[derive(Debug, Error)]
pub enum AoiError {
    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),

    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),

    #[error("TailEmpty: complementary cdf vanishes at t = {t}")]
    TailEmpty { t: f64 },

    #[error("DivergentAge: only {successes} of {target} deliveries after {events} events")]
    DivergentAge {
        successes: u64,
        target: u64,
        events: u64,
    },

    #[error("TruncationNotReached: random-walk sum still growing after {terms} terms")]
    TruncationNotReached { terms: usize },

    #[error("ZeroSuccessProbability: Pr(Y > S) = 0, no update is ever delivered")]
    ZeroSuccessProbability,

    #[error("QuadratureFailed: {0}")]
    QuadratureFailed(String),

    #[error("Io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("Parse: {0}")]
    Parse(String),
}

impl AoiError {
    /// Bare variant name, e.g. `DivergentAge`.
    pub fn name(&self) -> &'static str {
        match self {
            AoiError::InvalidParameter(_) => "InvalidParameter",
            AoiError::InvalidConfig(_) => "InvalidConfig",
            AoiError::TailEmpty { .. } => "TailEmpty",
            AoiError::DivergentAge { .. } => "DivergentAge",
            AoiError::TruncationNotReached { .. } => "TruncationNotReached",
            AoiError::ZeroSuccessProbability => "ZeroSuccessProbability",
            AoiError::QuadratureFailed(_) => "QuadratureFailed",
            AoiError::Io { .. } => "Io",
            AoiError::Parse(_) => "Parse",
        }
    }

    /// Errors that describe the queueing model rather than bad input.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            AoiError::DivergentAge { .. }
                | AoiError::ZeroSuccessProbability
                | AoiError::TruncationNotReached { .. }
                | AoiError::TailEmpty { .. }
                | AoiError::QuadratureFailed(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AoiError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, AoiError>;
