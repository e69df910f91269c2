use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("position ({x:.3e}, {y:.3e}) m lies outside the {half_fov:.3e} m half field of view")]
    OutOfView { x: f64, y: f64, half_fov: f64 },

    #[error("depth {z:.3e} m exceeds the design guard of {limit:.3e} m")]
    DepthOutOfRange { z: f64, limit: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("singular Fisher matrix: {0}")]
    Singular(String),

    #[error("bad file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that come from the numerics rather than from user input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Singular(_))
    }
}
