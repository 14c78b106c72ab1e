//! Declarative experiment configuration files (TOML) and their mapping onto
//! the library types. Unknown keys are rejected so typos fail loudly.

use piaid::harness::{ExperimentSpec, Scheme};
use piaid::netgen::{EsN0Mode, SystemConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub system: SystemSection,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub cdf: Option<CdfSection>,
    #[serde(default)]
    pub window: Option<WindowSection>,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub users: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub streams: usize,
    pub area_width_m: f64,
    pub area_height_m: f64,
    pub path_loss_exponent: f64,
    pub shadowing_sigma_db: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub seed: u64,
    pub trials: u64,
    pub esn0_grid_db: Vec<f64>,
    pub schemes: Vec<String>,
    #[serde(default = "default_true")]
    pub resample_on_ia_failure: bool,
    #[serde(default = "default_esn0_mode")]
    pub esn0_mode: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdfSection {
    pub esn0_db: f64,
    pub instances: u64,
    pub symbols_per_instance: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub p2_grid_db: Vec<f64>,
    pub trials: u64,
    pub esn0_db: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub out: String,
    /// Worker threads; 0 defers to `--workers`, `PIAID_WORKERS`, then all
    /// cores.
    #[serde(default)]
    pub workers: usize,
}

fn default_true() -> bool {
    true
}

fn default_esn0_mode() -> String {
    "network-average".to_string()
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let config: RunConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    if config.schema_version != 1 {
        return Err(ConfigError::Invalid(format!(
            "unsupported schema_version {}",
            config.schema_version
        )));
    }
    Ok(config)
}

impl RunConfig {
    pub fn system_config(&self) -> SystemConfig {
        SystemConfig {
            users: self.system.users,
            tx_antennas: self.system.tx_antennas,
            rx_antennas: self.system.rx_antennas,
            streams: self.system.streams,
            area_width_m: self.system.area_width_m,
            area_height_m: self.system.area_height_m,
            path_loss_exponent: self.system.path_loss_exponent,
            shadowing_sigma_db: self.system.shadowing_sigma_db,
            seed: self.experiment.seed,
        }
    }

    pub fn esn0_mode(&self) -> Result<EsN0Mode, ConfigError> {
        match self.experiment.esn0_mode.as_str() {
            "network-average" => Ok(EsN0Mode::NetworkAverage),
            "per-receiver" => Ok(EsN0Mode::PerReceiver),
            other => Err(ConfigError::Invalid(format!(
                "esn0_mode must be `network-average` or `per-receiver`, got `{other}`"
            ))),
        }
    }

    pub fn schemes(&self) -> Result<Vec<Scheme>, ConfigError> {
        self.experiment
            .schemes
            .iter()
            .map(|s| s.parse::<Scheme>().map_err(ConfigError::Invalid))
            .collect()
    }

    /// Build the library spec, after CLI overrides were applied to `self`.
    pub fn experiment_spec(&self) -> Result<ExperimentSpec, ConfigError> {
        let mut spec = ExperimentSpec::new(
            self.system_config(),
            self.experiment.esn0_grid_db.clone(),
            self.schemes()?,
            self.experiment.trials,
            self.experiment.seed,
        );
        spec.resample_on_ia_failure = self.experiment.resample_on_ia_failure;
        spec.esn0_mode = self.esn0_mode()?;
        spec.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(spec)
    }
}

/// Input for the one-shot selection command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    #[serde(default)]
    pub alpha: Option<usize>,
    /// Off-diagonal interference costs, row = receiver, column = transmitter.
    pub costs: Vec<Vec<f64>>,
    /// Optional receive powers `P_i L_ki` for strong/weak classification.
    #[serde(default)]
    pub rx_power: Option<Vec<Vec<f64>>>,
}
