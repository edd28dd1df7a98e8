//! Ontology-backed propagation of visual designs across data streams.
//!
//! The crate is organised around the three record classes of the ontology
//! (data streams, visualization functions and page bindings) and the
//! pipeline that propagates a reference binding onto similar stream groups:
//!
//! - [`ontology`]: the record store and its append-only change log
//! - [`index`]: inverted keyword/description index and the four-clause query
//! - [`similarity`]: feature-wise similarity matrices and their aggregation
//! - [`grouping`]: brute-force and spectral partitioning plus group validation
//! - [`ranking`]: in-group ordering, group scores and presentation order
//! - [`engine`]: orchestration, keyword annotation, activation and dashboard links

pub mod engine;
pub mod grouping;
pub mod index;
pub mod ontology;
pub mod ranking;
pub mod similarity;
pub mod text;

pub use engine::{Engine, EngineError};
pub use index::{InvertedIndex, PropagationQuery};
pub use ontology::{DataStreamRecord, DataType, OntologyStore, PageBinding, StoreError, VisFunctionRecord};
