//! Byzantine-robust federated averaging with client subsampling.
//!
//! The crate bundles a subsampling planner, robust aggregation rules, attack
//! models, synthetic tasks and a deterministic round-based simulator.

pub mod aggregation;
pub mod attacks;
pub mod error;
pub mod fl;
pub mod par;
pub mod planner;
pub mod rng;
pub mod tasks;
pub mod vector;
pub mod verify;

pub use error::{FedroError, Result};
pub use vector::ParameterVector;
