//! Command-line harness around `fedro-core`: sample-size planning, JSON-driven
//! runs, experiment presets and verification suites.

pub mod checks;
pub mod cli;
pub mod config;
pub mod error;
pub mod presets;
pub mod report;

pub use error::{HarnessError, Result};
