use thiserror::Error;

/// Everything that can go wrong in the analysis layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no resonance detected")]
    NoResonance,
    #[error("no oscillation detected: {0}")]
    NoOscillation(String),
    #[error("fit diverged: {0}")]
    Diverged(String),
    #[error("unphysical fit: {0}")]
    Unphysical(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Fit,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Domain(_) | Error::Parse { .. } | Error::Validation(_) => ErrorClass::Validation,
            Error::NoResonance
            | Error::NoOscillation(_)
            | Error::Diverged(_)
            | Error::Unphysical(_)
            | Error::Insufficient(_) => ErrorClass::Fit,
            Error::Io(_) => ErrorClass::Io,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Fails with a domain error unless every value is finite and strictly positive.
pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite and > 0, got {value}")))
    }
}

pub(crate) fn require_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be finite, got {value}")))
    }
}
