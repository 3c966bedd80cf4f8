use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong in the toolkit.
///
/// Variants are grouped by [`ErrorKind`] so front ends can map them onto
/// exit codes without matching every case.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("failed to parse {what}: {reason}")]
    Parse { what: String, reason: String },

    #[error("trial exponent m = {exponent} must exceed the number of branches N = {branches}")]
    Smoothness { exponent: u32, branches: usize },

    #[error("waveforms are not on the same time grid: {0}")]
    GridMismatch(String),

    #[error("time step too coarse for the integrator: need dt <= {required_dt:.3e} s, got {dt:.3e} s")]
    GridTooCoarse { dt: f64, required_dt: f64 },

    #[error("spectral propagation would wrap around: tail energy fraction {tail_fraction:.3e} exceeds 1e-10")]
    SpectralWraparound { tail_fraction: f64 },

    #[error("qubit-cavity detuning must be nonzero")]
    ZeroDetuning,

    #[error("branch {label} decays (rate {rate} 1/s) but has no decay target")]
    MissingDecayTarget { label: usize, rate: f64 },

    #[error("no branch with label {0}")]
    UnknownBranch(usize),

    #[error("fixed-point Kerr synthesis did not converge after {iterations} iterations (relative change {change:.3e})")]
    NonConvergence { iterations: usize, change: f64 },

    #[error("least-squares problem is ill-conditioned (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("mixture is degenerate: {0}")]
    Degenerate(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification of [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Invalid { .. }
            | Error::Parse { .. }
            | Error::Smoothness { .. }
            | Error::GridMismatch(_)
            | Error::ZeroDetuning
            | Error::MissingDecayTarget { .. }
            | Error::UnknownBranch(_) => ErrorKind::Validation,
            Error::GridTooCoarse { .. }
            | Error::SpectralWraparound { .. }
            | Error::NonConvergence { .. }
            | Error::IllConditioned { .. }
            | Error::Fit(_)
            | Error::Degenerate(_) => ErrorKind::Numerical,
            Error::Io { .. } => ErrorKind::Io,
        }
    }
}
