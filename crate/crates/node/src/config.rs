//! Node configuration: a flat key-value TOML document.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sharepass_core::protocol::NodeId;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Dealer,
    Shareholder,
    Service,
    Logger,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub role: Role,
    pub listen: String,
    /// Position in `shareholders`; shareholders only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<u16>,
    pub params: PathBuf,
    pub t: usize,
    pub n: usize,
    pub store: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_sink: Option<String>,
    /// Where records go when the log sink cannot be reached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_fallback: Option<PathBuf>,
    #[serde(default)]
    pub dealer: String,
    #[serde(default)]
    pub service: String,
    #[serde(default)]
    pub shareholders: Vec<String>,
    /// Split per-user service keys across the shareholders; service only.
    #[serde(default)]
    pub share_service_keys: bool,
    #[serde(default = "default_deadline_ms")]
    pub deadline_ms: u64,
}

fn default_deadline_ms() -> u64 {
    5_000
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl NodeConfig {
    pub fn load(path: &Path) -> Result<NodeConfig, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let cfg: NodeConfig = toml::from_str(&text)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.t == 0 || self.t > self.n {
            return bad(format!("threshold t={} must satisfy 1 <= t <= n={}", self.t, self.n));
        }
        if self.shareholders.len() != self.n {
            return bad(format!("n={} but {} shareholder addresses", self.n, self.shareholders.len()));
        }
        match self.role {
            Role::Shareholder => match self.index {
                Some(i) if (i as usize) < self.n => {}
                _ => return bad("shareholder needs an index below n".into()),
            },
            Role::Dealer | Role::Service => {
                if self.dealer.is_empty() || self.service.is_empty() {
                    return bad("dealer and service addresses are required".into());
                }
            }
            Role::Logger => {}
        }
        Ok(())
    }

    pub fn node_id(&self) -> NodeId {
        match self.role {
            Role::Dealer => NodeId::Dealer,
            Role::Service => NodeId::Service,
            Role::Logger => NodeId::Logger,
            Role::Shareholder => NodeId::Shareholder(self.index.unwrap_or(0)),
        }
    }

    pub fn deadline(&self) -> Duration {
        Duration::from_millis(self.deadline_ms)
    }
}
