use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sktree::eval::ExperimentConfig;
use sktree::ingest::FeaturizationConfig;

use crate::CliError;

pub const CACHE_ENV: &str = "SKTREE_CACHE_DIR";

/// Defaults read from `--config`; command-line flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub experiment: ExperimentConfig,
    pub ingest: FeaturizationConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("reading config {}: {e}", path.display())))?;
        Ok(toml::from_str(&text)?)
    }
}

/// Flag, then config file, then the environment.
pub fn cache_dir(flag: Option<&PathBuf>, file: Option<&PathBuf>) -> Option<PathBuf> {
    flag.or(file).cloned().or_else(|| std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
}
