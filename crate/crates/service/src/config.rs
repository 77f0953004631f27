//! Service configuration: a plain `key = value` file, path taken from
//! `DVS_CONFIG`.
//!
//! ```text
//! # comments start with '#'
//! listen     = 127.0.0.1:8080
//! data_dir   = ./data
//! k_min      = 5
//! timeout_ms = 2000
//! max_k      = 10000
//! peer       = lab-a http://10.0.0.5:8080
//! peer       = http://10.0.0.6:8080
//! ```
//!
//! `peer` may repeat; the display name is optional and defaults to the URL.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

pub const CONFIG_ENV: &str = "DVS_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerConfig {
    pub name: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    pub peers: Vec<PeerConfig>,
    pub k_min: u64,
    pub timeout: Duration,
    pub max_k: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("data"),
            peers: Vec::new(),
            k_min: 5,
            timeout: Duration::from_millis(2000),
            max_k: 10_000,
        }
    }
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = ServiceConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax { line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| syntax(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| syntax(format!("{key}: {what}: {value:?}"));
            match key {
                "listen" => c.listen = value.parse().map_err(|_| bad("not a socket address"))?,
                "data_dir" => c.data_dir = PathBuf::from(value),
                "k_min" => c.k_min = value.parse().map_err(|_| bad("not a count"))?,
                "timeout_ms" => c.timeout = Duration::from_millis(value.parse().map_err(|_| bad("not milliseconds"))?),
                "max_k" => c.max_k = value.parse().map_err(|_| bad("not a count"))?,
                "peer" => {
                    let mut parts = value.split_whitespace();
                    let peer = match (parts.next(), parts.next(), parts.next()) {
                        (Some(url), None, _) => PeerConfig { name: url.into(), url: url.into() },
                        (Some(name), Some(url), None) => PeerConfig { name: name.into(), url: url.into() },
                        _ => return Err(bad("expected [name] url")),
                    };
                    if !peer.url.starts_with("http://") && !peer.url.starts_with("https://") {
                        return Err(bad("peer url must start with http:// or https://"));
                    }
                    c.peers.push(peer);
                }
                _ => return Err(syntax(format!("unknown key {key:?}"))),
            }
        }
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.k_min == 0 {
            return Err(ConfigError::Invalid("k_min must be at least 1".into()));
        }
        if self.timeout.is_zero() {
            return Err(ConfigError::Invalid("timeout_ms must be positive".into()));
        }
        if self.max_k == 0 {
            return Err(ConfigError::Invalid("max_k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::parse(&text)
    }

    /// File named by `DVS_CONFIG`, or the defaults when it is unset.
    pub fn from_env() -> Result<Self, ConfigError> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) => Self::load(Path::new(&p)),
            None => Ok(Self::default()),
        }
    }
}
