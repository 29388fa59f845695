use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed file: {0}")]
    Parse(String),

    #[error("bad dimensions: {0}")]
    Dimension(String),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("loss weights must be non-negative and sum to 1 (got {alpha_t} + {alpha_s})")]
    Weight { alpha_t: f64, alpha_s: f64 },

    #[error("invalid agent state: {0}")]
    State(String),

    #[error("trajectory error: {0}")]
    Trajectory(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("non-finite value at {0}")]
    Numerics(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Stable name of the error class, used by the CLI when reporting failures.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "IoError",
            Error::Parse(_) => "ParseError",
            Error::Dimension(_) => "DimensionError",
            Error::Value(_) => "ValueError",
            Error::Shape(_) => "ShapeError",
            Error::Weight { .. } => "WeightError",
            Error::State(_) => "StateError",
            Error::Trajectory(_) => "TrajectoryError",
            Error::Dataset(_) => "DatasetError",
            Error::Numerics(_) => "NumericsError",
            Error::Config(_) => "ConfigError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
