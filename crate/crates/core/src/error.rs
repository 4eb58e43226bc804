use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {field}: {msg}")]
    Invalid { field: String, msg: String },

    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },

    #[error("mass matrix is singular at q = {q:?} (torso pitch near ±90°)")]
    Singular { q: Vec<f64> },

    /// `iterate` holds the decision vector being evaluated, when known.
    #[error("non-finite value in {what} at index {index}{}", dump(iterate))]
    NonFinite { what: &'static str, index: usize, iterate: Vec<f64> },

    #[error("time {t} s is outside [{t0}, {tf}] s")]
    OutOfRange { t: f64, t0: f64, tf: f64 },

    #[error("integrator step size underflow at t = {t} s, state = {state:?}")]
    StepUnderflow { t: f64, state: Vec<f64> },

    #[error("coincident sphere centres in collision pair {pair}")]
    Coincident { pair: usize },

    #[error("all {} starts failed: {}", .0.len(), .0.join("; "))]
    AllStartsFailed(Vec<String>),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("{0}")]
    Degenerate(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn dump(z: &[f64]) -> String {
    if z.is_empty() {
        String::new()
    } else {
        format!(" (iterate: {z:?})")
    }
}

impl Error {
    pub fn invalid(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Invalid { field: field.into(), msg: msg.into() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }
}
