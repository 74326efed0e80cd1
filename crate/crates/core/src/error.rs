use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("invalid parameter `{param}`: {message}")]
    InvalidParameter { param: &'static str, message: String },

    /// Input data is not well formed (unsorted breakpoints, length mismatch, ...).
    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("grid mismatch: {0} vs {1} samples")]
    GridMismatch(usize, usize),

    /// Orbit left the physically relevant band.
    #[error("orbit blew up at x = {x}: |m| = {m_abs} exceeds the guard")]
    BlowUp { x: f64, m_abs: f64 },

    #[error("integrator exceeded {0} steps")]
    TooManySteps(usize),

    /// The requested level is never reached along the orbit branch.
    #[error("level not reached: {0}")]
    LevelNotReached(String),

    #[error("root not bracketed: {0}")]
    NotBracketed(String),

    /// A construction cannot be completed for the given data.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Phase point lies on or outside the invariant region where it is required inside.
    #[error("outside invariant region: {0}")]
    OutsideInvariantRegion(String),

    #[error("no decay: {0}")]
    NoDecay(String),

    #[error("staircase diverged at step {step}: distance {distance:.3e} after dwell (started at {start:.3e})")]
    Diverged { step: usize, distance: f64, start: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn param(param: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter { param, message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable code, used by the CLI error record.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Malformed(_) => "malformed_input",
            Error::GridMismatch(..) => "grid_mismatch",
            Error::BlowUp { .. } => "blow_up",
            Error::TooManySteps(_) => "too_many_steps",
            Error::LevelNotReached(_) => "level_not_reached",
            Error::NotBracketed(_) => "not_bracketed",
            Error::Infeasible(_) => "infeasible",
            Error::OutsideInvariantRegion(_) => "outside_invariant_region",
            Error::NoDecay(_) => "no_decay",
            Error::Diverged { .. } => "diverged",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
        }
    }

    /// Offending parameter, when there is one.
    pub fn parameter(&self) -> Option<&'static str> {
        match self {
            Error::InvalidParameter { param, .. } => Some(param),
            _ => None,
        }
    }
}
