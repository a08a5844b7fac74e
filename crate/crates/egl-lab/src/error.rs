//! Crate-wide error type and exit-code mapping for the CLI.

use thiserror::Error;

/// Errors produced by dataset generation, solvers, fitting, and the harness.
#[derive(Error, Debug)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error("solver did not converge after {iterations} iterations (gap {gap:.3e})")]
    SolverNonConvergence {
        iterations: usize,
        gap: f64,
        /// Best iterate found before giving up.
        best: Vec<f64>,
    },

    #[error("solver error: {0}")]
    Solver(String),

    #[error("degenerate normalization baseline: |DQ(y,y) - DQ(eps,y)| = {denominator:.3e} < 1e-12")]
    DegenerateBaseline { denominator: f64 },

    #[error("training error at update {step}: {message}")]
    Training { step: usize, message: String },

    #[error("loss fitting error: {0}")]
    Fit(String),

    #[error("dataset generation error: {0}")]
    Generation(String),

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("acceptance threshold failure: {0}")]
    Acceptance(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config/input, 3 solver/numeric, 4
    /// acceptance-threshold failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Dimension { .. } | Error::Config(_) | Error::Capability(_) => 2,
            Error::SolverNonConvergence { .. }
            | Error::Solver(_)
            | Error::DegenerateBaseline { .. }
            | Error::Training { .. }
            | Error::Fit(_)
            | Error::Generation(_)
            | Error::Experiment(_) => 3,
            Error::Acceptance(_) => 4,
            Error::Io(_) | Error::Json(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
