use std::path::{Path, PathBuf};

use agentsim_runners::ExperimentConfig;
use thiserror::Error;

/// A config problem, located by file and field path.
#[derive(Debug, Error)]
#[error("{}: {}{message}", path.display(), field.as_deref().map(|f| format!("at `{f}`: ")).unwrap_or_default())]
pub struct ConfigError {
    pub path: PathBuf,
    /// Dotted path of the offending field, when known.
    pub field: Option<String>,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: &Path, field: Option<&str>, message: impl Into<String>) -> Self {
        ConfigError { path: path.to_path_buf(), field: field.map(String::from), message: message.into() }
    }
}

/// Strictly parse an experiment file. Returns the config and the raw bytes
/// it was parsed from.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, Vec<u8>), ConfigError> {
    let raw = std::fs::read(path).map_err(|e| ConfigError::new(path, None, format!("cannot read: {e}")))?;
    let config = parse_config(&raw).map_err(|(field, message)| ConfigError {
        path: path.to_path_buf(),
        field,
        message,
    })?;
    Ok((config, raw))
}

/// Unknown keys are rejected; errors carry the field path when serde can name one.
pub fn parse_config(raw: &[u8]) -> Result<ExperimentConfig, (Option<String>, String)> {
    let mut de = serde_json::Deserializer::from_slice(raw);
    let config: ExperimentConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let field = (field != ".").then_some(field);
        (field, e.into_inner().to_string())
    })?;
    de.end().map_err(|e| (None, e.to_string()))?;
    if config.trials == 0 {
        return Err((Some("trials".into()), "must be at least 1".into()));
    }
    Ok(config)
}
