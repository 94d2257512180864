use std::path::PathBuf;

use thiserror::Error;

/// Broad failure classes; the CLI maps each one onto a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Solver,
    Contract,
    Io,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Solver => 3,
            ErrorClass::Contract => 4,
            ErrorClass::Io => 5,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("observation center {center} lies inside the closed cross-section [{lo}, {hi}]")]
    InvalidCenter { center: f64, lo: f64, hi: f64 },

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("shape mismatch: expected {expected} samples, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("coefficient set violates the admissible class: {0}")]
    ClassViolation(String),

    #[error("linear solve failed at step {step}: relative residual {residual:e} after {iterations} iterations")]
    LinearSolve {
        step: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("boundary data violates the boundary condition: {0}")]
    BoundaryCondition(String),

    #[error("time series too short: need at least {needed} snapshots, got {got}")]
    TooFewSnapshots { needed: usize, got: usize },

    #[error("derivative-parity extension requires Re f(t=0) = 0; found |Re| = {max_real:e}")]
    ParityViolation { max_real: f64 },

    #[error("stencil reach: order {order} needs a zero collar of more than {order} node layers, probe has {collar}")]
    StencilReach { order: usize, collar: usize },

    #[error("mask violation: {0}")]
    MaskViolation(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config { .. } | Error::InvalidCenter { .. } | Error::InvalidParameter { .. } => {
                ErrorClass::Config
            }
            Error::LinearSolve { .. } => ErrorClass::Solver,
            Error::Io { .. } | Error::Format { .. } => ErrorClass::Io,
            Error::ShapeMismatch { .. }
            | Error::ClassViolation(_)
            | Error::BoundaryCondition(_)
            | Error::TooFewSnapshots { .. }
            | Error::ParityViolation { .. }
            | Error::StencilReach { .. }
            | Error::MaskViolation(_)
            | Error::Contract(_) => ErrorClass::Contract,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
