use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use propagator_core::ontology::{DataStreamRecord, OntologyStore, StreamId};
use serde::{Deserialize, Serialize};

use crate::manifest::{cache_path, fetch, parse_series, write_series, IngestError, IngestManifest, Observation};

/// A fetched, transformed source that has not touched the store yet.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedStream {
    pub record: DataStreamRecord,
    pub series: Vec<Observation>,
}

impl IngestManifest {
    /// Fetches, parses and transforms the source. Nothing is written.
    pub fn prepare(&self) -> Result<PreparedStream, IngestError> {
        self.validate()?;
        let text = fetch(&self.source)?;
        let series = parse_series(&text, &self.source)?
            .into_iter()
            .map(|o| Observation { value: self.transform.apply(o.value), ..o })
            .collect();
        let record = self.record();
        record.validate()?;
        Ok(PreparedStream { record, series })
    }
}

impl PreparedStream {
    pub fn write_cache(&self, cache_dir: &Path) -> Result<(), IngestError> {
        write_series(&cache_path(cache_dir, &self.record.id), &self.series)
    }

    /// Writes the cache file, then registers the stream.
    pub fn commit(self, store: &mut OntologyStore, cache_dir: &Path) -> Result<StreamId, IngestError> {
        self.write_cache(cache_dir)?;
        Ok(store.put_data_stream(self.record)?)
    }
}

/// Fetch, transform, cache and register one source. Failures leave the store untouched.
pub fn run_manifest_once(manifest: &IngestManifest, store: &mut OntologyStore, cache_dir: &Path) -> Result<StreamId, IngestError> {
    manifest.prepare()?.commit(store, cache_dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AgentOutcome {
    Executed { stream_id: StreamId },
    Failed { error: String },
    Skipped { next_due: DateTime<Utc> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReport {
    pub source_id: String,
    #[serde(flatten)]
    pub outcome: AgentOutcome,
}

/// Remembers the last successful run of each source.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentScheduler {
    last_success: BTreeMap<String, DateTime<Utc>>,
}

impl AgentScheduler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads state saved by [`AgentScheduler::save`]; a missing file is a fresh scheduler.
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| IngestError::Cache { path: path.to_owned(), message: e.to_string() }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(IngestError::Cache { path: path.to_owned(), message: e.to_string() }),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let err = |e: &dyn std::fmt::Display| IngestError::Cache { path: path.to_owned(), message: e.to_string() };
        let text = serde_json::to_string_pretty(self).map_err(|e| err(&e))?;
        std::fs::write(path, text).map_err(|e| err(&e))
    }

    pub fn last_success(&self, source_id: &str) -> Option<DateTime<Utc>> {
        self.last_success.get(source_id).copied()
    }

    pub fn next_due(&self, manifest: &IngestManifest) -> Option<DateTime<Utc>> {
        let period = chrono::Duration::seconds(manifest.period_seconds.min(i64::MAX as u64) as i64);
        self.last_success(&manifest.source_id).map(|t| t + period)
    }

    pub fn is_due(&self, manifest: &IngestManifest, now: DateTime<Utc>) -> bool {
        self.next_due(manifest).is_none_or(|due| now >= due)
    }

    /// Runs every due manifest through `execute`; a failure never stops the batch.
    pub fn run<F>(&mut self, manifests: &[IngestManifest], now: DateTime<Utc>, mut execute: F) -> Vec<AgentReport>
    where
        F: FnMut(&IngestManifest) -> Result<StreamId, IngestError>,
    {
        manifests
            .iter()
            .map(|m| {
                let outcome = match self.next_due(m) {
                    Some(next_due) if now < next_due => AgentOutcome::Skipped { next_due },
                    _ => match execute(m) {
                        Ok(stream_id) => {
                            self.last_success.insert(m.source_id.clone(), now);
                            tracing::info!(source = %m.source_id, %stream_id, "ingested");
                            AgentOutcome::Executed { stream_id }
                        }
                        Err(e) => {
                            tracing::warn!(source = %m.source_id, error = %e, "ingest failed");
                            AgentOutcome::Failed { error: e.to_string() }
                        }
                    },
                };
                AgentReport { source_id: m.source_id.clone(), outcome }
            })
            .collect()
    }
}
