use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{var}: {reason}")]
    Env { var: &'static str, reason: String },
}

/// Service settings. Read from a `key = value` file, then overridden by
/// `TAGREC_LISTEN`, `TAGREC_DATA_DIR`, `TAGREC_ADMIN_SECRET`,
/// `TAGREC_SESSION_TTL_DAYS` and `TAGREC_LINK_BASE`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    pub data_dir: PathBuf,
    /// Without a secret the admin endpoint refuses every request.
    pub admin_secret: Option<String>,
    pub session_ttl_days: i64,
    /// Prefix of the links written to the outbox.
    pub link_base: String,
    /// Seeds session tokens, for reproducible runs.
    pub seed: Option<u64>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("data"),
            admin_secret: None,
            session_ttl_days: 30,
            link_base: "http://127.0.0.1:8080".into(),
            seed: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// File (if any) with environment overrides applied.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("TAGREC_LISTEN") {
            self.listen = v;
        }
        if let Some(v) = get("TAGREC_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = get("TAGREC_ADMIN_SECRET") {
            self.admin_secret = Some(v);
        }
        if let Some(v) = get("TAGREC_LINK_BASE") {
            self.link_base = v;
        }
        if let Some(v) = get("TAGREC_SESSION_TTL_DAYS") {
            self.session_ttl_days = v.parse().map_err(|_| ConfigError::Env {
                var: "TAGREC_SESSION_TTL_DAYS",
                reason: format!("`{v}` is not a whole number of days"),
            })?;
        }
        if self.session_ttl_days < 1 {
            return Err(ConfigError::Env {
                var: "TAGREC_SESSION_TTL_DAYS",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}
