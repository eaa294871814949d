use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use vizcritique::config::ClarifyConfig;
use vizcritique::setup::BackendSettings;

use crate::service::DEFAULT_WORKERS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub storage_root: PathBuf,
    pub workers: usize,
    /// Thresholds TOML; defaults apply when unset.
    pub thresholds: Option<PathBuf>,
    /// Largest accepted upload body in bytes.
    pub max_upload_bytes: usize,
    pub backends: BackendSettings,
    /// Bearer token to user id.
    pub tokens: BTreeMap<String, String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            storage_root: PathBuf::from("data"),
            workers: DEFAULT_WORKERS,
            thresholds: None,
            max_upload_bytes: 32 * 1024 * 1024,
            backends: BackendSettings::default(),
            tokens: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
}

fn read(path: &Path) -> Result<String, ConfigFileError> {
    std::fs::read_to_string(path).map_err(|e| ConfigFileError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Relative paths in the file resolve against the file's directory.
pub fn load_service_config(path: &Path) -> Result<ServiceConfig, ConfigFileError> {
    let mut cfg: ServiceConfig = toml::from_str(&read(path)?).map_err(|e| ConfigFileError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let fix = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    fix(&mut cfg.storage_root);
    cfg.thresholds.as_mut().map(fix);
    cfg.backends.exchanges.as_mut().map(fix);
    cfg.backends.fixtures.as_mut().map(fix);
    Ok(cfg)
}

pub fn load_thresholds(path: Option<&Path>) -> Result<ClarifyConfig, ConfigFileError> {
    match path {
        None => Ok(ClarifyConfig::default()),
        Some(p) => ClarifyConfig::from_toml(&read(p)?).map_err(|e| ConfigFileError::Read {
            path: p.to_path_buf(),
            message: e.to_string(),
        }),
    }
}
