//! Optional JSON configuration file. Command-line flags override config
//! values, which override built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Path to a class map (JSON array of class names).
    pub class_map: Option<PathBuf>,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub progress: ProgressConfig,
    #[serde(default)]
    pub reconcile: ReconcileSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub min_confidence: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgressConfig {
    pub min_confidence: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconcileSection {
    pub min_sharpness: Option<f64>,
    pub min_contrast: Option<f64>,
    pub max_clip_fraction: Option<f64>,
    pub pos_tol_m: Option<f64>,
}

impl Config {
    /// Loads the config from `--config`, falling back to the `CPM_CONFIG`
    /// environment variable, falling back to defaults.
    pub fn load(flag: Option<&Path>) -> Result<Self> {
        let path = match flag {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os("CPM_CONFIG").map(PathBuf::from),
        };
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: Config = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }
}
