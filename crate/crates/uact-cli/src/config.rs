//! Declarative pipeline configuration. Every field is optional; effective
//! values resolve as flags > config file > built-in defaults.

use serde::{Deserialize, Serialize};
use uact_core::aml::TauDistribution;
use uact_core::clean::CleanConfig;
use uact_core::sampler::Strategy;

use crate::CliError;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub raw: Option<String>,
    pub schemas: Option<String>,
    pub episodes: Option<String>,
    pub manifest: Option<String>,
    pub shard: Option<String>,
    pub model: Option<String>,
    pub out_dir: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkConfig {
    pub h: Option<usize>,
    pub stride: Option<usize>,
    pub clip: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub strategy: Option<Strategy>,
    pub seed: Option<u64>,
    pub draws: Option<usize>,
    pub single_arm_budget: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub steps: Option<usize>,
    pub tau_max: Option<f64>,
    pub tau_distribution: Option<TauDistribution>,
    pub seed: Option<u64>,
    pub hidden: Option<Vec<usize>>,
    pub embed_dim: Option<usize>,
    pub paradigm: Option<String>,
    pub activation: Option<String>,
}

/// One declarative document covering the whole pipeline; commands read the
/// sections they need.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: Option<u32>,
    pub paths: PathsConfig,
    pub clean: Option<CleanConfig>,
    pub chunk: ChunkConfig,
    pub sampling: SamplingConfig,
    pub train: TrainSection,
}

impl PipelineConfig {
    /// Loads and parses a config file; a missing or malformed file is a
    /// validation error (exit 1).
    pub fn load(path: &str) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config '{path}': {e}")))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("invalid config '{path}': {e}")))
    }

    pub fn load_opt(path: Option<&str>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }
}
