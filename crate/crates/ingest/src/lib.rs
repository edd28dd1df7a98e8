//! Getting data streams into the ontology: manifest-driven download agents
//! and a deterministic synthetic regional corpus.

pub mod agents;
pub mod manifest;
pub mod synth;

pub use agents::{run_manifest_once, AgentOutcome, AgentReport, AgentScheduler, PreparedStream};
pub use manifest::{cache_path, read_series, IngestError, IngestManifest, Observation, Transform};
pub use synth::{generate_synthetic_corpus, seed_reference_page, SyntheticCorpusSpec};
