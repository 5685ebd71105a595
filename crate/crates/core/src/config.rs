//! TOML configuration file.
//!
//! ```toml
//! [simulate]
//! seed = 7
//! water_classes = ["I", "3C"]
//! color_space = "linear"
//!
//! [simulate.augmentation]
//! max_gain = 1.5
//!
//! [eval]
//! unit_scale = 0.001
//! pooling = "per-pixel"
//! ```
//!
//! Every key is optional. Command-line flags override file values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset_pipeline::PipelineConfig;
use crate::depth_eval::{EvalConfig, Pooling};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "UWSIM_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub unit_scale: f64,
    pub max_depth_cap: Option<f64>,
    pub delta_thresholds: Vec<f64>,
    pub silog_lambda: f64,
    pub median_align: bool,
    pub pooling: Pooling,
    /// Meters per unit for 16-bit PNG depth.
    pub depth_scale: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        let m = EvalConfig::default();
        EvalSection {
            unit_scale: m.unit_scale,
            max_depth_cap: m.max_depth_cap,
            delta_thresholds: m.delta_thresholds,
            silog_lambda: m.silog_lambda,
            median_align: m.median_align,
            pooling: Pooling::PerImage,
            depth_scale: 0.001,
        }
    }
}

impl EvalSection {
    pub fn metrics(&self) -> EvalConfig {
        EvalConfig {
            unit_scale: self.unit_scale,
            max_depth_cap: self.max_depth_cap,
            delta_thresholds: self.delta_thresholds.clone(),
            silog_lambda: self.silog_lambda,
            median_align: self.median_align,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub simulate: PipelineConfig,
    pub eval: EvalSection,
}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Loads `explicit`, or the file named by `UWSIM_CONFIG`, or defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }
}
