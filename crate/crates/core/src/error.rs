use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid of {points} points per axis cannot carry a mode box of radius {maxmode} (need at least {required})")]
    GridTooSmall {
        points: usize,
        maxmode: usize,
        required: usize,
    },

    #[error("field shapes differ: dim {left_dim}/K {left_k} vs dim {right_dim}/K {right_k}")]
    ShapeMismatch {
        left_dim: usize,
        left_k: usize,
        right_dim: usize,
        right_k: usize,
    },

    #[error("unsupported dimension {0} (only 1 and 2 are implemented)")]
    UnsupportedDimension(usize),

    #[error("nonlinearity overflow at t = {time}: grid values of f(u) are not finite (max |u| = {max_abs_u})")]
    Overflow { time: f64, max_abs_u: f64 },

    #[error("time sampling too coarse: {samples} samples per unit window, need at least {required} for max frequency {max_frequency}")]
    TimeSamplingTooCoarse {
        samples: usize,
        required: usize,
        max_frequency: f64,
    },

    #[error("rejection sampler exhausted {tries} tries (mean Gibbs weight observed {acceptance_rate:.3e})")]
    ExhaustedTries { tries: usize, acceptance_rate: f64 },

    #[error("effective sample size {ess:.1} below the minimum {min}")]
    DegenerateWeights { ess: f64, min: f64 },

    #[error("ODE profile did not close: {0}")]
    NoReturn(String),

    #[error("resolution: {0}")]
    Resolution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("configuration rejected:\n  - {}", .0.join("\n  - "))]
    Constraints(Vec<String>),

    #[error("bad FWF1 data: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
