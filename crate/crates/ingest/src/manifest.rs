use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use propagator_core::ontology::{DataStreamRecord, DataType, StreamId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("invalid manifest {source_id}: {message}")]
    InvalidManifest { source_id: String, message: String },
    #[error("fetching {location}: {message}")]
    Fetch { location: String, message: String },
    #[error("parsing {location} line {line}: {message}")]
    Parse { location: String, line: usize, message: String },
    #[error("writing cache {path}: {message}")]
    Cache { path: PathBuf, message: String },
    #[error(transparent)]
    Store(#[from] propagator_core::StoreError),
    #[error("registering stream: {0}")]
    Registration(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    #[serde(rename = "per_capita_100k")]
    PerCapita100k { population: u64 },
}

impl Transform {
    pub fn apply(&self, value: f64) -> f64 {
        match *self {
            Transform::Identity => value,
            Transform::PerCapita100k { population } => value * 100_000.0 / population as f64,
        }
    }
}

/// One upstream source and how to register it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub source_id: String,
    /// `file://` URI, plain path, or `http://` URL.
    pub source: String,
    pub transform: Transform,
    pub keywords: BTreeSet<String>,
    pub data_type: DataType,
    /// `{source_id}` is replaced by the manifest's id.
    #[serde(default)]
    pub description_template: String,
    pub period_seconds: u64,
}

impl IngestManifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self, IngestError> {
        let m: IngestManifest =
            toml::from_str(text).map_err(|e| IngestError::Manifest { path: path.to_owned(), message: e.to_string() })?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IngestError::Manifest { path: path.to_owned(), message: e.to_string() })?;
        Self::parse(&text, path)
    }

    /// Every `*.toml` file in `dir`, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>, IngestError> {
        let err = |e: std::io::Error| IngestError::Manifest { path: dir.to_owned(), message: e.to_string() };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        paths.iter().map(|p| Self::load(p)).collect()
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let fail = |message: &str| {
            Err(IngestError::InvalidManifest { source_id: self.source_id.clone(), message: message.to_owned() })
        };
        if self.source_id.trim().is_empty() || self.source_id.chars().any(char::is_whitespace) {
            return fail("source_id must be a non-empty token");
        }
        if self.source.trim().is_empty() {
            return fail("source is empty");
        }
        if let Transform::PerCapita100k { population: 0 } = self.transform {
            return fail("per-capita population must be positive");
        }
        if self.period_seconds == 0 {
            return fail("period_seconds must be at least 1");
        }
        if self.keywords.is_empty() {
            return fail("keywords are empty");
        }
        Ok(())
    }

    pub fn stream_id(&self) -> StreamId {
        StreamId(format!("ds-{}", self.source_id))
    }

    pub fn period(&self) -> Duration {
        Duration::from_secs(self.period_seconds)
    }

    pub fn description(&self) -> String {
        self.description_template.replace("{source_id}", &self.source_id)
    }

    /// The record this manifest registers; the endpoint serves the cached series.
    pub fn record(&self) -> DataStreamRecord {
        let id = self.stream_id();
        DataStreamRecord {
            endpoint: format!("/streams/{id}/data"),
            id,
            description: self.description(),
            keywords: self.keywords.clone(),
            data_type: self.data_type,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub date: String,
    pub value: f64,
}

/// Reads a `date,value` CSV with a header row.
pub fn parse_series(text: &str, source: &str) -> Result<Vec<Observation>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header_ok = reader
        .headers()
        .map(|h| h.len() == 2 && h[0].eq_ignore_ascii_case("date") && h[1].eq_ignore_ascii_case("value"))
        .unwrap_or(false);
    if !header_ok {
        return Err(IngestError::Parse { location: source.to_owned(), line: 1, message: "expected header date,value".into() });
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let parse_err = |message: String| IngestError::Parse { location: source.to_owned(), line, message };
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        if row.len() != 2 {
            return Err(parse_err(format!("expected 2 columns, got {}", row.len())));
        }
        let value: f64 = row[1].parse().map_err(|_| parse_err(format!("value {:?} is not numeric", &row[1])))?;
        if !value.is_finite() {
            return Err(parse_err(format!("value {value} is not finite")));
        }
        out.push(Observation { date: row[0].to_owned(), value });
    }
    Ok(out)
}

pub fn write_series(path: &Path, series: &[Observation]) -> Result<(), IngestError> {
    let err = |e: &dyn std::fmt::Display| IngestError::Cache { path: path.to_owned(), message: e.to_string() };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| err(&e))?;
    }
    let tmp = path.with_extension("csv.tmp");
    let mut w = csv::Writer::from_path(&tmp).map_err(|e| err(&e))?;
    for obs in series {
        w.serialize(obs).map_err(|e| err(&e))?;
    }
    w.flush().map_err(|e| err(&e))?;
    drop(w);
    std::fs::rename(&tmp, path).map_err(|e| err(&e))
}

pub fn read_series(path: &Path) -> Result<Vec<Observation>, IngestError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| IngestError::Fetch { location: path.display().to_string(), message: e.to_string() })?;
    parse_series(&text, &path.display().to_string())
}

/// Cache file for a stream inside `cache_dir`.
pub fn cache_path(cache_dir: &Path, id: &StreamId) -> PathBuf {
    cache_dir.join(format!("{id}.csv"))
}

/// Source payload as text.
pub fn fetch(source: &str) -> Result<String, IngestError> {
    let fail = |message: String| IngestError::Fetch { location: source.to_owned(), message };
    if source.starts_with("http://") || source.starts_with("https://") {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| fail(e.to_string()))?;
        let resp = client.get(source).send().map_err(|e| fail(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(fail(format!("HTTP {}", resp.status())));
        }
        resp.text().map_err(|e| fail(e.to_string()))
    } else {
        let path = source.strip_prefix("file://").unwrap_or(source);
        std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))
    }
}
