use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use ptc_galerkin::{build_initial_mesh, builtin, AdaptiveConfig};

/// Environment variable that replaces `output_dir` from the file.
pub const OUTPUT_DIR_ENV: &str = "PTC_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    pub epsilon_list: Vec<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub adaptive: AdaptiveConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a file, then applies the output-dir override.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        let mut config = Self::parse(&text)?;
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            config.output_dir = PathBuf::from(dir);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.epsilon_list.is_empty() {
            return invalid("epsilon_list must not be empty".into());
        }
        if let Some(e) = self.epsilon_list.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return invalid(format!("epsilon {e} must be positive"));
        }
        self.adaptive.validate().map_err(ConfigError::Invalid)?;
        let spec = builtin(&self.problem, self.epsilon_list[0]).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let mesh = build_initial_mesh(&spec.domain, self.adaptive.resolution)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.adaptive.dof_max < mesh.dof_count() {
            return invalid(format!(
                "dof_max = {} is below the {} degrees of freedom of the initial mesh",
                self.adaptive.dof_max,
                mesh.dof_count()
            ));
        }
        Ok(())
    }
}
