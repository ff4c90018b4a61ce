//! Optional TOML configuration named by `OCTX_CONFIG`. Command-line flags
//! override anything set here.
//!
//! ```toml
//! [train]
//! epochs = 10
//!
//! [explain]
//! samples = 200
//!
//! [serve]
//! listen = "0.0.0.0:8080"
//! ui_dir = "review-ui/dist"
//! ```

use std::path::{Path, PathBuf};

use anyhow::Context;
use octx_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::panels::ExplainParams;

pub const CONFIG_ENV: &str = "OCTX_CONFIG";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainBounds {
    pub max_samples: usize,
    pub max_features: usize,
}

impl Default for ExplainBounds {
    fn default() -> Self {
        Self {
            max_samples: 2000,
            max_features: 20,
        }
    }
}

impl ExplainBounds {
    pub fn check(&self, p: &ExplainParams) -> Result<(), String> {
        let within = |name: &str, v: usize, max: usize| {
            if (1..=max).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} must be in 1..={max}, got {v}"))
            }
        };
        within("samples", p.samples, self.max_samples)?;
        within("features", p.features, self.max_features)?;
        within("posneg_features", p.posneg_features, self.max_features)?;
        within("top_labels", p.top_labels, usize::MAX)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub weights: PathBuf,
    pub listen: String,
    /// Holds `images/` and `audit.log`.
    pub storage: PathBuf,
    pub max_upload_bytes: usize,
    pub bounds: ExplainBounds,
    /// Static files served at `/`, typically the built review UI.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            weights: PathBuf::from("octx.weights"),
            listen: "127.0.0.1:8080".into(),
            storage: PathBuf::from("octx-data"),
            max_upload_bytes: 10 * 1024 * 1024,
            bounds: ExplainBounds::default(),
            ui_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub train: TrainConfig,
    pub explain: ExplainParams,
    pub serve: ServiceConfig,
}

impl FileConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Reads `OCTX_CONFIG` if set, defaults otherwise.
    pub fn from_env() -> anyhow::Result<Self> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }
}
