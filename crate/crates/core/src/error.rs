use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid cavity geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("horizon {horizon_us} us is shorter than the read-pulse support (needs >= {required_us} us)")]
    HorizonTooShort { horizon_us: f64, required_us: f64 },

    #[error("integrator produced a non-finite state at t = {t_us} us")]
    NonFinite { t_us: f64 },

    #[error("integrator exceeded {max_steps} steps before reaching t = {t_end_us} us")]
    StepLimit { max_steps: usize, t_end_us: f64 },

    #[error("grid point (dc = {dc_mhz} MHz, dr = {dr_mhz} MHz): {source}")]
    GridPoint {
        dc_mhz: f64,
        dr_mhz: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("unresolved splitting: found {found} interior local maxima, need 2")]
    UnresolvedSplitting { found: usize },

    #[error("fit refused: {0}")]
    Underdetermined(String),

    #[error("invalid fit problem: {0}")]
    InvalidFitProblem(String),

    #[error("rank-deficient Jacobian (condition estimate {condition:e}); data do not constrain all free parameters")]
    RankDeficient { condition: f64 },

    #[error("correlator `{0}` is undefined: zero denominator")]
    UndefinedCorrelator(&'static str),

    #[error("noise-dominated heralds: p_b = {p_b} >= p_w = {p_w}, correction undefined")]
    NoiseDominated { p_b: f64, p_w: f64 },

    #[error("{file}:{line}: key `{key}`: {message}")]
    Config {
        file: PathBuf,
        line: usize,
        key: String,
        message: String,
    },

    #[error("malformed input {file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for this error: 3 for configuration and input
    /// format problems, 5 for I/O, 4 for everything raised by the models.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parse { .. } | Error::Json(_) => 3,
            Error::Io { .. } => 5,
            _ => 4,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
