use std::path::{Path, PathBuf};

use propagator_core::engine::SearchParams;
use propagator_core::grouping::{GroupingAlgorithm, GroupingThresholds};
use propagator_core::ranking::{check_w, DEFAULT_W};
use propagator_core::similarity::SimilarityWeights;
use serde::{Deserialize, Serialize};

pub const CONFIG_ENV: &str = "PROPAGATOR_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupingConfig {
    pub algorithm: GroupingAlgorithm,
    pub kmeans_seed: u64,
    pub thresholds: GroupingThresholds,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self { algorithm: GroupingAlgorithm::Bruteforce, kmeans_seed: 0, thresholds: GroupingThresholds::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankingConfig {
    pub w: f64,
}

impl Default for RankingConfig {
    fn default() -> Self {
        Self { w: DEFAULT_W }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub store_path: PathBuf,
    pub listen_port: u16,
    /// Directory of ingest manifests used by the admin ingest endpoint.
    pub manifests_dir: Option<PathBuf>,
    pub similarity: SimilarityWeights,
    pub grouping: GroupingConfig,
    pub ranking: RankingConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            store_path: PathBuf::from("propagator-data"),
            listen_port: 8080,
            manifests_dir: None,
            similarity: SimilarityWeights::default(),
            grouping: GroupingConfig::default(),
            ranking: RankingConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServiceConfig = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.to_owned(), message: e.to_string() })?;
        Self::parse(&text)
    }

    /// File named by `explicit`, else by the environment variable, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit.map(Path::to_path_buf).or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from)) {
            Some(path) => Self::load(&path),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.listen_port == 0 {
            return Err(ConfigError::Invalid("listen_port must be in 1..=65535".into()));
        }
        self.grouping.thresholds.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        check_w(self.ranking.w).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn search_params(&self) -> SearchParams {
        SearchParams {
            algorithm: self.grouping.algorithm,
            thresholds: self.grouping.thresholds,
            weights: self.similarity,
            w: self.ranking.w,
            kmeans_seed: self.grouping.kmeans_seed,
            ..SearchParams::default()
        }
    }

    /// Where ingested series are cached.
    pub fn series_dir(&self) -> PathBuf {
        self.store_path.join("series")
    }

    pub fn agent_state_path(&self) -> PathBuf {
        self.store_path.join("agents.json")
    }
}
