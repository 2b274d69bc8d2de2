use std::path::PathBuf;

use fedro_core::FedroError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// The JSON document does not match the schema.
    #[error("invalid config at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Invalid(#[from] FedroError),

    #[error("no tolerable b_hat exists for n = {n}, b = {b}, T = {rounds}, p = {p} at n_hat = {n_hat}")]
    Infeasible {
        n: usize,
        b: usize,
        rounds: u64,
        p: f64,
        n_hat: usize,
    },

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("cannot read {path}: {source}")]
    Input {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("malformed trace file {path}: {message}")]
    Trace { path: PathBuf, message: String },

    #[error("cannot build thread pool: {0}")]
    ThreadPool(String),
}

impl HarnessError {
    /// Process exit status: 1 for failed checks and output errors, 2 for
    /// invalid input, 3 when the planner finds no tolerable `b_hat`.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Schema { .. } | HarnessError::Invalid(_) | HarnessError::Input { .. } => 2,
            HarnessError::Infeasible { .. } => 3,
            HarnessError::CheckFailed(_)
            | HarnessError::Output { .. }
            | HarnessError::Trace { .. }
            | HarnessError::ThreadPool(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
