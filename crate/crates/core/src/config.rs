//! TOML run configuration shared by the gateway, the store and the
//! simulator. Every key is optional; see [`DEFAULT_CONFIG`].

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::cloud::{ChoreoCredentials, CloudError, QuotaLedger, DEFAULT_QUOTA_LIMIT, DEFAULT_QUOTA_PERIOD_MS};
use crate::gateway::{GatewayConfig, GatewayError};
use crate::inventory::{DeficiencyRule, InventoryError};
use crate::sensors::{EggMode, DEFAULT_BOTTLE_THRESHOLD_ML, DEFAULT_NOISE_SPAN, WEIGHT_SLOTS};

/// The defaults written out in full.
pub const DEFAULT_CONFIG: &str = r#"# fridgesim configuration

[gateway]
poll_interval_ms = 1000
weight_deadband_g = 20.0
presence_threshold_g = 50.0
image_every_n = 1        # 0 disables image capture
heartbeat_ms = 0         # 0 disables heartbeat uploads
# calibration = "calibration.txt"

[gateway.backoff]
initial_ms = 1000
multiplier = 2.0
cap_ms = 60000

[quota]
limit = 250
period_ms = 2592000000

[credentials]
app_key = "fridgesim-app"
app_secret = "fridgesim-app-secret"
token_key = "fridgesim-token"
token_secret = "fridgesim-token-secret"

[sensors]
egg_mode = "deterministic"
bottle_threshold_ml = 300
noise_span_counts = 103
offset_deltas = [0.0, 2150.0, -1830.0, 3420.0, -2760.0, 1190.0]

[client]
rules = []              # e.g. ["eggs >= 6", "weight[0] >= 200"]

[sim]
start_ms = 1577836800000
tail_ms = 10000
"#;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Credentials(#[from] CloudError),
    #[error(transparent)]
    Rule(#[from] InventoryError),
    #[error("config setting {0} is out of range")]
    Range(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuotaConfig {
    pub limit: u32,
    pub period_ms: u64,
}

impl Default for QuotaConfig {
    fn default() -> Self {
        QuotaConfig {
            limit: DEFAULT_QUOTA_LIMIT,
            period_ms: DEFAULT_QUOTA_PERIOD_MS,
        }
    }
}

impl QuotaConfig {
    pub fn ledger(&self, start_ms: u64) -> QuotaLedger {
        QuotaLedger::new(self.limit, self.period_ms, start_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CredentialsConfig {
    pub app_key: String,
    pub app_secret: String,
    pub token_key: String,
    pub token_secret: String,
}

impl Default for CredentialsConfig {
    fn default() -> Self {
        CredentialsConfig {
            app_key: "fridgesim-app".into(),
            app_secret: "fridgesim-app-secret".into(),
            token_key: "fridgesim-token".into(),
            token_secret: "fridgesim-token-secret".into(),
        }
    }
}

impl CredentialsConfig {
    pub fn credentials(&self) -> Result<ChoreoCredentials, CloudError> {
        ChoreoCredentials::new(
            self.app_key.clone(),
            self.app_secret.clone(),
            self.token_key.clone(),
            self.token_secret.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub egg_mode: EggMode,
    pub bottle_threshold_ml: u32,
    pub noise_span_counts: u32,
    /// Zero-offset shift of each channel relative to the measured sensor.
    pub offset_deltas: [f64; WEIGHT_SLOTS],
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            egg_mode: EggMode::Deterministic,
            bottle_threshold_ml: DEFAULT_BOTTLE_THRESHOLD_ML,
            noise_span_counts: DEFAULT_NOISE_SPAN,
            offset_deltas: [0.0, 2150.0, -1830.0, 3420.0, -2760.0, 1190.0],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    /// Deficiency rules, one per entry.
    pub rules: Vec<String>,
}

impl ClientConfig {
    pub fn rules(&self) -> Result<Vec<DeficiencyRule>, InventoryError> {
        self.rules.iter().map(|r| r.parse()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    /// Virtual wall-clock time of scenario t = 0, in Unix ms.
    pub start_ms: u64,
    /// How long to keep polling after the last event.
    pub tail_ms: u64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            start_ms: 1_577_836_800_000,
            tail_ms: 10_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub gateway: GatewayConfig,
    pub quota: QuotaConfig,
    pub credentials: CredentialsConfig,
    pub sensors: SensorConfig,
    pub client: ClientConfig,
    pub sim: SimSettings,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a file; a relative calibration path is taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::parse(&text)?;
        if let (Some(cal), Some(dir)) = (&config.gateway.calibration, path.parent()) {
            if cal.is_relative() {
                config.gateway.calibration = Some(dir.join(cal));
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.gateway.validate()?;
        self.credentials.credentials()?;
        self.client.rules()?;
        if self.quota.period_ms == 0 {
            return Err(ConfigError::Range("quota.period_ms"));
        }
        if self.sensors.bottle_threshold_ml == 0 {
            return Err(ConfigError::Range("sensors.bottle_threshold_ml"));
        }
        if self.sensors.offset_deltas.iter().any(|d| !d.is_finite()) {
            return Err(ConfigError::Range("sensors.offset_deltas"));
        }
        Ok(())
    }
}
