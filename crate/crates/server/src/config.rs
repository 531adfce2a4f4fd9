//! Server configuration, read from TOML.
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::HashSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use ami_core::tools::profiles::{email_is_well_formed, UserProfile};
use ami_core::auth::UserRecord;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PlannerMode {
    #[default]
    Scripted,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedUser {
    pub username: String,
    pub password_hash: String,
    pub display_name: Option<String>,
    pub email: String,
    pub notification_threshold_pm2_5: Option<f64>,
}

impl SeedUser {
    pub fn record(&self) -> UserRecord {
        UserRecord {
            username: self.username.clone(),
            password_hash: self.password_hash.clone(),
        }
    }

    pub fn profile(&self) -> UserProfile {
        UserProfile {
            user_id: self.username.clone(),
            display_name: self.display_name.clone().unwrap_or_else(|| self.username.clone()),
            email: self.email.clone(),
            notification_threshold_pm2_5: self.notification_threshold_pm2_5,
        }
    }
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_data_dir() -> PathBuf {
    "data".into()
}

fn default_max_rounds() -> usize {
    ami_core::agent::DEFAULT_MAX_ROUNDS
}

fn default_ttl() -> i64 {
    24
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_bind")]
    pub bind_address: String,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    #[serde(default)]
    pub planner_mode: PlannerMode,
    pub scripted_rules_path: Option<PathBuf>,
    #[serde(default)]
    pub remote: RemoteConfig,
    /// Pre-shared key sensors must send in `X-Device-Key`. Off when unset.
    pub device_key: Option<String>,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    #[serde(default = "default_ttl")]
    pub session_ttl_hours: i64,
    /// Directory of static files (the dashboard build) served at `/`.
    pub static_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed_users: Vec<SeedUser>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid TOML: {0}")]
    Parse(String),
    #[error("config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load, resolve relative paths against the file's directory, validate.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: Config = toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        if let Some(p) = self.scripted_rules_path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.static_dir.as_mut() {
            fix(p);
        }
    }

    pub fn bind_addr(&self) -> Result<SocketAddr, ConfigError> {
        self.bind_address
            .parse()
            .map_err(|e| invalid("bind_address", format!("`{}` is not a socket address: {e}", self.bind_address)))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.bind_addr()?;
        match self.planner_mode {
            PlannerMode::Scripted => {
                let Some(path) = &self.scripted_rules_path else {
                    return Err(invalid("scripted_rules_path", "required when planner_mode is scripted"));
                };
                if !path.is_file() {
                    return Err(invalid(
                        "scripted_rules_path",
                        format!("rule file {} does not exist", path.display()),
                    ));
                }
            }
            PlannerMode::Remote => {
                if self.remote.endpoint.as_deref().is_none_or(str::is_empty) {
                    return Err(invalid("remote.endpoint", "required when planner_mode is remote"));
                }
                if self.remote.model.as_deref().is_none_or(str::is_empty) {
                    return Err(invalid("remote.model", "required when planner_mode is remote"));
                }
            }
        }
        if self.max_rounds == 0 {
            return Err(invalid("max_rounds", "must be at least 1"));
        }
        if self.session_ttl_hours <= 0 {
            return Err(invalid("session_ttl_hours", "must be positive"));
        }
        if self.device_key.as_deref() == Some("") {
            return Err(invalid("device_key", "must not be empty; omit it to disable"));
        }
        let mut seen = HashSet::new();
        for (i, u) in self.seed_users.iter().enumerate() {
            let field = |f: &str| format!("seed_users[{i}].{f}");
            if u.username.trim().is_empty() {
                return Err(invalid(field("username"), "must not be empty"));
            }
            if !seen.insert(u.username.as_str()) {
                return Err(invalid(field("username"), format!("duplicate user `{}`", u.username)));
            }
            if !u.password_hash.starts_with("sha256$") || u.password_hash.split('$').count() != 4 {
                return Err(invalid(
                    field("password_hash"),
                    "expected `sha256$<iterations>$<salt>$<digest>` (see `ami hash-password`)",
                ));
            }
            if !email_is_well_formed(&u.email) {
                return Err(invalid(field("email"), format!("`{}` is not an email address", u.email)));
            }
            if u.notification_threshold_pm2_5.is_some_and(|t| !(t >= 0.0 && t.is_finite())) {
                return Err(invalid(field("notification_threshold_pm2_5"), "must be a non-negative number"));
            }
        }
        Ok(())
    }
}
