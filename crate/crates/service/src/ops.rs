//! Operations shared by the REST handlers and the command line.

use std::path::Path;

use propagator_core::engine::{Engine, EngineError, SearchParams};
use propagator_core::grouping::{GroupingAlgorithm, GroupingThresholds};
use propagator_core::ontology::PageBinding;
use propagator_core::similarity::SimilarityWeights;
use propagator_ingest::{
    generate_synthetic_corpus, seed_reference_page, AgentReport, AgentScheduler, IngestError, IngestManifest,
    SyntheticCorpusSpec,
};
use serde::{Deserialize, Serialize};

use crate::config::ServiceConfig;

/// Per-request changes to the configured search parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsOverride {
    pub algorithm: Option<GroupingAlgorithm>,
    pub thresholds: Option<GroupingThresholds>,
    pub weights: Option<SimilarityWeights>,
    pub w: Option<f64>,
    pub kmeans_seed: Option<u64>,
    pub include_failed: Option<bool>,
    pub auto_exclude: Option<bool>,
}

impl ParamsOverride {
    pub fn apply(&self, base: &SearchParams) -> SearchParams {
        SearchParams {
            algorithm: self.algorithm.unwrap_or(base.algorithm),
            thresholds: self.thresholds.unwrap_or(base.thresholds),
            weights: self.weights.unwrap_or(base.weights),
            w: self.w.unwrap_or(base.w),
            kmeans_seed: self.kmeans_seed.unwrap_or(base.kmeans_seed),
            include_failed: self.include_failed.unwrap_or(base.include_failed),
            auto_exclude: self.auto_exclude.unwrap_or(base.auto_exclude),
        }
    }
}

pub fn open_engine(config: &ServiceConfig) -> Result<Engine, EngineError> {
    std::fs::create_dir_all(&config.store_path).map_err(|source| {
        EngineError::Store(propagator_core::StoreError::Io { path: config.store_path.clone(), source })
    })?;
    Engine::open(&config.store_path, config.search_params())
}

/// Runs every due manifest, registering streams through the engine.
pub fn run_ingest(
    engine: &Engine,
    config: &ServiceConfig,
    manifests: &[IngestManifest],
    scheduler: &mut AgentScheduler,
) -> Vec<AgentReport> {
    let series_dir = config.series_dir();
    scheduler.run(manifests, chrono::Utc::now(), |m| {
        let prepared = m.prepare()?;
        prepared.write_cache(&series_dir)?;
        engine
            .write(|s| s.put_data_stream(prepared.record))
            .map_err(|e| IngestError::Registration(e.to_string()))
    })
}

/// Loads manifests from `dir`, runs the due ones and saves scheduler state.
pub fn ingest_dir(engine: &Engine, config: &ServiceConfig, dir: &Path) -> Result<Vec<AgentReport>, IngestError> {
    let manifests = IngestManifest::load_dir(dir)?;
    let state = config.agent_state_path();
    let mut scheduler = AgentScheduler::load(&state)?;
    let reports = run_ingest(engine, config, &manifests, &mut scheduler);
    scheduler.save(&state)?;
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub streams: usize,
    pub reference_page: Option<PageBinding>,
}

/// Registers a synthetic corpus in one write, optionally with a reference page.
pub fn load_synthetic(
    engine: &Engine,
    spec: &SyntheticCorpusSpec,
    reference_page: Option<&str>,
) -> Result<SynthSummary, anyhow::Error> {
    let records = generate_synthetic_corpus(spec)?;
    let streams = records.len();
    let reference_page = engine.write(|s| {
        for r in records {
            s.put_data_stream(r)?;
        }
        reference_page.map(|id| seed_reference_page(s, spec, id)).transpose()
    })?;
    Ok(SynthSummary { streams, reference_page })
}
