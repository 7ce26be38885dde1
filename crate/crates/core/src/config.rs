//! Configuration: one TOML file layered over built-in defaults, then
//! `MEO_`-prefixed environment overrides (`MEO_API__ASYNC_THRESHOLD=500`
//! sets `api.async_threshold`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::connectors::ThrottlePolicy;
use crate::platform::Platform;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlatformConfig {
    pub enabled: bool,
    /// Scheduled crawl interval in hours.
    pub cadence_hours: u32,
    #[serde(flatten)]
    pub throttle: ThrottlePolicy,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        Self { enabled: true, cadence_hours: 24 * 7, throttle: ThrottlePolicy::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageConfig {
    pub root: PathBuf,
}

impl Default for StorageConfig {
    fn default() -> Self {
        Self { root: PathBuf::from("meo-data") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Window slice, in days, after which coverage is checkpointed.
    pub chunk_days: u32,
    pub page_size: usize,
    /// Worker threads for the normalize and embed stages.
    pub parallelism: usize,
    /// How far back the first scheduled crawl of a platform reaches.
    pub initial_lookback_days: u32,
    /// Base URL of a mock platform server; in-process mock when empty.
    pub connector_url: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { chunk_days: 7, page_size: 100, parallelism: 4, initial_lookback_days: 30, connector_url: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApiConfig {
    pub bind: String,
    pub tokens: Vec<String>,
    /// Analysis inputs above this many nodes or posts run as jobs.
    pub async_threshold: usize,
    pub default_limit: usize,
    pub max_limit: usize,
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            tokens: vec!["dev-token".into()],
            async_threshold: 10_000,
            default_limit: 50,
            max_limit: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub storage: StorageConfig,
    pub pipeline: PipelineConfig,
    pub api: ApiConfig,
    pub platforms: BTreeMap<Platform, PlatformConfig>,
}

fn default_platforms() -> BTreeMap<Platform, PlatformConfig> {
    let cadence = |p: Platform| match p {
        // twice a week
        Platform::XTwitter => 84,
        Platform::Youtube | Platform::Bluesky => 24,
        Platform::Tiktok | Platform::Instagram | Platform::Telegram | Platform::Facebook => 24 * 7,
    };
    Platform::ALL
        .iter()
        .map(|p| {
            let cfg = PlatformConfig { enabled: *p != Platform::Facebook, cadence_hours: cadence(*p), ..Default::default() };
            (*p, cfg)
        })
        .collect()
}

impl Default for Config {
    fn default() -> Self {
        Self {
            storage: StorageConfig::default(),
            pipeline: PipelineConfig::default(),
            api: ApiConfig::default(),
            platforms: default_platforms(),
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse_env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl Config {
    /// Defaults, then `text`, then overrides, validated.
    pub fn from_sources(
        text: Option<&str>,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let mut value = toml::Value::try_from(Config::default()).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if let Some(text) = text {
            let file: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
            merge(&mut value, toml::Value::Table(file));
        }
        for (k, v) in env {
            let Some(path) = k.strip_prefix("MEO_") else { continue };
            let keys: Vec<String> = path.split("__").map(str::to_lowercase).collect();
            if keys.iter().any(String::is_empty) {
                continue;
            }
            let mut over = parse_env_value(&v);
            for key in keys.iter().rev() {
                let mut t = toml::Table::new();
                t.insert(key.clone(), over);
                over = toml::Value::Table(t);
            }
            merge(&mut value, over);
        }
        let cfg: Config = value.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (if given) and the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_path_buf(), source })?),
            None => None,
        };
        Self::from_sources(text.as_deref(), std::env::vars())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (p, c) in &self.platforms {
            c.throttle.validate().map_err(|e| ConfigError::Invalid(format!("platforms.{p}: {e}")))?;
            if c.enabled && c.cadence_hours == 0 {
                return Err(ConfigError::Invalid(format!("platforms.{p}: cadence must be positive")));
            }
        }
        if self.pipeline.chunk_days == 0 {
            return Err(ConfigError::Invalid("pipeline.chunk_days must be positive".into()));
        }
        if self.pipeline.page_size == 0 {
            return Err(ConfigError::Invalid("pipeline.page_size must be positive".into()));
        }
        if self.api.max_limit == 0 || self.api.default_limit == 0 {
            return Err(ConfigError::Invalid("api limits must be positive".into()));
        }
        Ok(())
    }

    pub fn throttle_policy(&self, platform: Platform) -> ThrottlePolicy {
        self.platforms.get(&platform).map(|c| c.throttle).unwrap_or_default()
    }

    pub fn throttle_policies(&self) -> BTreeMap<Platform, ThrottlePolicy> {
        Platform::ALL.iter().map(|p| (*p, self.throttle_policy(*p))).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
