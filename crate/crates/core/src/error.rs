//! Error type shared by every module.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// Transmission vanishes, so its phase (and any derivative of it) is undefined.
    #[error("phase of t(k) undefined at k = {k}")]
    UndefinedPhase { k: f64 },

    #[error("quantity ill-defined: {0}")]
    IllDefined(String),

    #[error("green-matrix reconstruction mismatch: deviation {deviation:e}")]
    ReconstructionMismatch { deviation: f64 },

    #[error("steady state is not unique: {0}")]
    DegenerateSteadyState(String),

    #[error("drive amplitude outside the linear regime: relative change {change:e} on halving")]
    WeakDriveViolation { change: f64 },

    #[error("grid error: {0}")]
    Grid(String),

    /// A closed-form result needs an input that only the master-equation engine provides.
    #[error("missing dependency: {0}")]
    MissingDependency(&'static str),

    #[error("flux normalisation not calibrated")]
    CalibrationRequired,

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("configuration error{}: {message}", at_line(*line))]
    Config { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::NumericFailure(msg.into())
    }

    /// Configuration error at a 1-based line; `0` when no single line is at fault.
    pub fn config(line: usize, msg: impl Into<String>) -> Self {
        Error::Config { line, message: msg.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

fn at_line(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!(" at line {line}")
    }
}
