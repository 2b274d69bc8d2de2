use thiserror::Error;

/// Errors raised by the planner, aggregators, attacks, tasks and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FedroError {
    #[error("argument `{name}` = {value} is outside its domain: {reason}")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid configuration field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("empty input set")]
    EmptyInput,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("trimming needs n_hat > 2 * b_hat (n_hat = {n_hat}, b_hat = {b_hat})")]
    InsufficientInputs { n_hat: usize, b_hat: usize },

    #[error("subset enumeration capped at n_hat <= {cap}, got {n_hat}")]
    EnumerationCap { n_hat: usize, cap: usize },

    #[error("client {0} is Byzantine and has no honest gradient oracle")]
    ByzantineClient(usize),

    #[error("step sizes violate gamma_c <= 1/(16LK) and gamma_c*gamma_s <= 1/(36LK): {0}")]
    StepSizePrecondition(String),
}

pub type Result<T> = std::result::Result<T, FedroError>;

pub(crate) fn domain(name: &'static str, value: f64, reason: &'static str) -> FedroError {
    FedroError::Domain {
        name,
        value,
        reason,
    }
}
