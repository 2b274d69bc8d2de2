//! JSON run configurations.

use std::path::Path;

use fedro_core::fl::RunConfig;
use fedro_core::FedroError;

use crate::error::{HarnessError, Result};

/// Parses and validates a run configuration. Schema errors carry the path of
/// the offending field; semantic errors name the field that failed validation.
pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let path = err.path().to_string();
        HarnessError::Schema {
            path: if path == "." { "<root>".into() } else { path },
            message: err.into_inner().to_string(),
        }
    })?;
    config.validate().map_err(|err| match err {
        FedroError::InvalidConfig { field, reason } => HarnessError::Schema {
            path: field.to_string(),
            message: reason,
        },
        other => HarnessError::Invalid(other),
    })?;
    Ok(config)
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Input {
        path: path.to_path_buf(),
        source,
    })?;
    parse_run_config(&text)
}
