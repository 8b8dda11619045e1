use thiserror::Error;

/// Errors produced by reconstruction, queries and file handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({}, {}, {}) lies outside the grid", .point[0], .point[1], .point[2])]
    OutsideGrid { point: [f64; 3] },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn outside(p: &crate::Vec3) -> Self {
        Error::OutsideGrid {
            point: [p.x, p.y, p.z],
        }
    }
}
