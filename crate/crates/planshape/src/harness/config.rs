//! Run configuration files (TOML).

use std::fmt;
use std::path::{Path, PathBuf};

use planshape_core::marl::{AlgorithmConfig, PlannerFallback, TrainConfig};
use planshape_core::{EnvConfig, ShapingConfig};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Which planning function drives shaping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PlannerChoice {
    Reference,
    /// Stored external artifact, by prompt hash.
    Artifact(String),
    None,
}

impl fmt::Display for PlannerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlannerChoice::Reference => f.write_str("reference"),
            PlannerChoice::Artifact(h) => write!(f, "artifact:{h}"),
            PlannerChoice::None => f.write_str("none"),
        }
    }
}

impl std::str::FromStr for PlannerChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "reference" => Ok(PlannerChoice::Reference),
            "none" => Ok(PlannerChoice::None),
            _ => match s.strip_prefix("artifact:") {
                Some(h) if !h.is_empty() => Ok(PlannerChoice::Artifact(h.to_string())),
                _ => Err(format!("planner must be reference, none or artifact:<hash>, got {s:?}")),
            },
        }
    }
}

impl Serialize for PlannerChoice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PlannerChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

fn default_artifact_dir() -> PathBuf {
    PathBuf::from("artifacts")
}

fn default_jobs() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub output_dir: PathBuf,
    pub planner: PlannerChoice,
    #[serde(default)]
    pub planner_fallback: PlannerFallback,
    #[serde(default = "default_artifact_dir")]
    pub artifact_dir: PathBuf,
    /// Seeds trained concurrently.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    pub env: EnvConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub shaping: ShapingConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{field}: {message}")]
    Field { field: &'static str, message: String },
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let field = |field, message: String| Err(ConfigError::Field { field, message });
        if self.seeds.is_empty() {
            return field("seeds", "at least one seed is required".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return field("seeds", "seeds must be distinct".into());
        }
        if self.planner == PlannerChoice::None && self.shaping.enabled {
            return field("shaping.enabled", "shaping needs a planner; set planner or disable shaping".into());
        }
        if self.jobs == 0 {
            return field("jobs", "must be at least 1".into());
        }
        if let Err(e) = self.env.validate() {
            return field("env", e.to_string());
        }
        if let Err(e) = self.algorithm.validate() {
            return field("algorithm", e.to_string());
        }
        if self.shaping.enabled {
            if let Err(e) = self.shaping.validate() {
                return field("shaping", e.to_string());
            }
        }
        if self.eval_interval == 0 {
            return field("eval_interval", "must be positive".into());
        }
        if self.eval_episodes == 0 {
            return field("eval_episodes", "must be positive".into());
        }
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            env: self.env.clone(),
            algorithm: self.algorithm.clone(),
            shaping: self.shaping,
            total_steps: self.total_steps,
            eval_interval: self.eval_interval,
            eval_episodes: self.eval_episodes,
            seed,
            planner_fallback: self.planner_fallback,
        }
    }
}
