//! The ontology: data streams, visualization functions and page bindings.
//!
//! Every successful mutation appends one [`ChangeLogEntry`]; the text index
//! follows the store by replaying that log. Page bindings are immutable in
//! their visualization function and data streams, only their child links may
//! grow. A `(vis_id, ordered data_ids)` pair is bound at most once.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::tokenize_endpoint;

pub const SCHEMA_VERSION: u32 = 1;

const STREAMS_FILE: &str = "streams.ndjson";
const VIS_FILE: &str = "visfns.ndjson";
const PAGES_FILE: &str = "pages.ndjson";
const LOG_FILE: &str = "changelog.ndjson";

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub const PREFIX: &'static str = $prefix;

            /// A fresh ULID-based identifier with the class prefix.
            pub fn generate() -> Self {
                Self(format!("{}{}", $prefix, ulid::Ulid::new()))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_newtype!(
    /// Identifier of a [`DataStreamRecord`].
    StreamId,
    "ds-"
);
id_newtype!(
    /// Identifier of a [`VisFunctionRecord`].
    VisId,
    "vis-"
);
id_newtype!(
    /// Identifier of a [`PageBinding`].
    PageId,
    "pg-"
);

/// Kind of data carried by a stream. Unknown names parse as [`DataType::Other`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum DataType {
    Timeseries,
    CumulativeTimeseries,
    Matrix,
    Geo,
    Scalar,
    Other,
}

impl DataType {
    pub const ALL: [DataType; 6] = [
        DataType::Timeseries,
        DataType::CumulativeTimeseries,
        DataType::Matrix,
        DataType::Geo,
        DataType::Scalar,
        DataType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DataType::Timeseries => "timeseries",
            DataType::CumulativeTimeseries => "cumulative_timeseries",
            DataType::Matrix => "matrix",
            DataType::Geo => "geo",
            DataType::Scalar => "scalar",
            DataType::Other => "other",
        }
    }

    pub fn parse_lossy(s: &str) -> Self {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|t| t.as_str() == s).unwrap_or(DataType::Other)
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<String> for DataType {
    fn from(s: String) -> Self {
        DataType::parse_lossy(&s)
    }
}

impl From<DataType> for String {
    fn from(t: DataType) -> Self {
        t.as_str().to_owned()
    }
}

/// One registered data stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataStreamRecord {
    /// Empty on input means "assign one".
    #[serde(default)]
    pub id: StreamId,
    pub endpoint: String,
    #[serde(default)]
    pub description: String,
    pub keywords: BTreeSet<String>,
    pub data_type: DataType,
}

impl DataStreamRecord {
    pub fn new<I, S>(id: impl Into<StreamId>, endpoint: &str, description: &str, keywords: I, data_type: DataType) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            id: id.into(),
            endpoint: endpoint.to_owned(),
            description: description.to_owned(),
            keywords: keywords.into_iter().map(Into::into).collect(),
            data_type,
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if self.keywords.is_empty() {
            return Err(StoreError::InvalidRecord(format!("stream {}: keywords must not be empty", self.id)));
        }
        if let Some(bad) = self.keywords.iter().find(|k| !is_valid_keyword(k)) {
            return Err(StoreError::InvalidRecord(format!(
                "stream {}: keyword {bad:?} must be a non-empty lowercase token without whitespace",
                self.id
            )));
        }
        let endpoint = self.endpoint.trim();
        if endpoint.is_empty() || endpoint.len() != self.endpoint.len() || tokenize_endpoint(endpoint).is_empty() {
            return Err(StoreError::InvalidRecord(format!("stream {}: malformed endpoint {:?}", self.id, self.endpoint)));
        }
        if self.endpoint.chars().any(char::is_whitespace) {
            return Err(StoreError::InvalidRecord(format!("stream {}: endpoint contains whitespace", self.id)));
        }
        Ok(())
    }
}

fn is_valid_keyword(k: &str) -> bool {
    !k.is_empty() && !k.chars().any(|c| c.is_whitespace() || c.is_uppercase())
}

/// A registered visualization function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisFunctionRecord {
    #[serde(default)]
    pub id: VisId,
    pub function_name: String,
    #[serde(default)]
    pub description: String,
}

impl VisFunctionRecord {
    pub fn new(id: impl Into<VisId>, function_name: &str, description: &str) -> Self {
        Self { id: id.into(), function_name: function_name.to_owned(), description: description.to_owned() }
    }
}

/// One visualization function bound to an ordered list of streams.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageBinding {
    pub id: PageId,
    pub vis_id: VisId,
    pub data_ids: Vec<StreamId>,
    pub child_page_ids: Vec<PageId>,
    pub title: String,
    pub description: String,
    pub is_reference: bool,
}

/// Arguments of [`OntologyStore::create_page_binding`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewPageBinding {
    #[serde(default)]
    pub id: Option<PageId>,
    pub vis_id: VisId,
    pub data_ids: Vec<StreamId>,
    #[serde(default)]
    pub child_page_ids: Vec<PageId>,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub is_reference: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    PutStream,
    PutVis,
    PutPage,
    LinkPages,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeLogEntry {
    pub seq: u64,
    pub kind: ChangeKind,
    pub payload_id: String,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("visualization function name {name:?} already registered as {existing}")]
    DuplicateFunctionName { name: String, existing: VisId },
    #[error("visualization {vis_id} is already bound to these streams by page {existing}")]
    DuplicateBinding { vis_id: VisId, existing: PageId },
    #[error("page {0} already exists")]
    DuplicatePage(PageId),
    #[error("dangling reference to {kind} {id}")]
    DanglingReference { kind: &'static str, id: String },
    #[error("{kind} {id} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("corrupt store file {file}:{line}: {message}")]
    Corrupt { file: PathBuf, line: usize, message: String },
    #[error("store io error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io { path: path.to_owned(), source }
    }
}

/// Every record and the change log, in a form that round-trips through disk.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Snapshot {
    pub streams: Vec<DataStreamRecord>,
    pub vis_functions: Vec<VisFunctionRecord>,
    pub pages: Vec<PageBinding>,
    pub change_log: Vec<ChangeLogEntry>,
}

/// In-memory ontology with an append-only change log.
///
/// Mutations take `&mut self`; callers that share a store across threads wrap
/// it in a lock so that writes serialize and readers see whole snapshots.
#[derive(Debug, Clone, Default)]
pub struct OntologyStore {
    streams: BTreeMap<StreamId, DataStreamRecord>,
    vis_functions: BTreeMap<VisId, VisFunctionRecord>,
    pages: BTreeMap<PageId, PageBinding>,
    log: Vec<ChangeLogEntry>,
    vis_by_name: HashMap<String, VisId>,
    binding_keys: HashMap<(VisId, Vec<StreamId>), PageId>,
}

impl OntologyStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn append_log(&mut self, kind: ChangeKind, payload_id: &str) {
        let seq = self.next_seq();
        self.log.push(ChangeLogEntry { seq, kind, payload_id: payload_id.to_owned() });
    }

    /// Sequence number the next mutation will receive.
    pub fn next_seq(&self) -> u64 {
        self.log.len() as u64 + 1
    }

    /// Highest applied sequence number, 0 for an empty log.
    pub fn head_seq(&self) -> u64 {
        self.log.len() as u64
    }

    pub fn put_data_stream(&mut self, mut record: DataStreamRecord) -> Result<StreamId, StoreError> {
        if record.id.is_empty() {
            record.id = StreamId::generate();
        }
        record.validate()?;
        let id = record.id.clone();
        self.streams.insert(id.clone(), record);
        self.append_log(ChangeKind::PutStream, id.as_str());
        Ok(id)
    }

    pub fn put_vis_function(&mut self, mut record: VisFunctionRecord) -> Result<VisId, StoreError> {
        if record.id.is_empty() {
            record.id = VisId::generate();
        }
        if record.function_name.trim().is_empty() {
            return Err(StoreError::InvalidRecord(format!("vis {}: function_name must not be empty", record.id)));
        }
        if let Some(existing) = self.vis_by_name.get(&record.function_name) {
            if *existing != record.id {
                return Err(StoreError::DuplicateFunctionName {
                    name: record.function_name.clone(),
                    existing: existing.clone(),
                });
            }
        }
        if let Some(old) = self.vis_functions.get(&record.id) {
            self.vis_by_name.remove(&old.function_name);
        }
        let id = record.id.clone();
        self.vis_by_name.insert(record.function_name.clone(), id.clone());
        self.vis_functions.insert(id.clone(), record);
        self.append_log(ChangeKind::PutVis, id.as_str());
        Ok(id)
    }

    pub fn create_page_binding(&mut self, new: NewPageBinding) -> Result<PageBinding, StoreError> {
        let id = new.id.unwrap_or_else(PageId::generate);
        if id.is_empty() {
            return Err(StoreError::InvalidRecord("page id must not be empty".into()));
        }
        if self.pages.contains_key(&id) {
            return Err(StoreError::DuplicatePage(id));
        }
        if !self.vis_functions.contains_key(&new.vis_id) {
            return Err(StoreError::DanglingReference { kind: "vis function", id: new.vis_id.0 });
        }
        if new.data_ids.is_empty() {
            return Err(StoreError::InvalidRecord(format!("page {id}: data_ids must not be empty")));
        }
        let mut seen = BTreeSet::new();
        for data_id in &new.data_ids {
            if !self.streams.contains_key(data_id) {
                return Err(StoreError::DanglingReference { kind: "data stream", id: data_id.0.clone() });
            }
            if !seen.insert(data_id) {
                return Err(StoreError::InvalidRecord(format!("page {id}: duplicate data id {data_id}")));
            }
        }
        for child in &new.child_page_ids {
            if !self.pages.contains_key(child) {
                return Err(StoreError::DanglingReference { kind: "page", id: child.0.clone() });
            }
        }
        let key = (new.vis_id.clone(), new.data_ids.clone());
        if let Some(existing) = self.binding_keys.get(&key) {
            return Err(StoreError::DuplicateBinding { vis_id: new.vis_id, existing: existing.clone() });
        }

        let page = PageBinding {
            id: id.clone(),
            vis_id: new.vis_id,
            data_ids: new.data_ids,
            child_page_ids: new.child_page_ids,
            title: new.title,
            description: new.description,
            is_reference: new.is_reference,
        };
        self.binding_keys.insert(key, id.clone());
        self.pages.insert(id.clone(), page.clone());
        self.append_log(ChangeKind::PutPage, id.as_str());
        Ok(page)
    }

    /// Appends `child` to the links of `parent`.
    pub fn link_child_page(&mut self, parent: &PageId, child: &PageId) -> Result<(), StoreError> {
        if parent == child {
            return Err(StoreError::InvalidRecord(format!("page {parent} cannot link to itself")));
        }
        if !self.pages.contains_key(child) {
            return Err(StoreError::DanglingReference { kind: "page", id: child.0.clone() });
        }
        let page = self
            .pages
            .get_mut(parent)
            .ok_or_else(|| StoreError::NotFound { kind: "page", id: parent.0.clone() })?;
        if page.child_page_ids.contains(child) {
            return Err(StoreError::InvalidRecord(format!("page {parent} already links to {child}")));
        }
        page.child_page_ids.push(child.clone());
        self.append_log(ChangeKind::LinkPages, parent.as_str());
        Ok(())
    }

    /// All entries with `seq >= from_seq`, in order.
    pub fn read_change_log(&self, from_seq: u64) -> &[ChangeLogEntry] {
        let start = from_seq.max(1) as usize - 1;
        self.log.get(start..).unwrap_or(&[])
    }

    pub fn stream(&self, id: &StreamId) -> Option<&DataStreamRecord> {
        self.streams.get(id)
    }

    pub fn vis_function(&self, id: &VisId) -> Option<&VisFunctionRecord> {
        self.vis_functions.get(id)
    }

    pub fn vis_function_by_name(&self, name: &str) -> Option<&VisFunctionRecord> {
        self.vis_by_name.get(name).and_then(|id| self.vis_functions.get(id))
    }

    pub fn page(&self, id: &PageId) -> Option<&PageBinding> {
        self.pages.get(id)
    }

    pub fn streams(&self) -> impl Iterator<Item = &DataStreamRecord> {
        self.streams.values()
    }

    pub fn vis_functions(&self) -> impl Iterator<Item = &VisFunctionRecord> {
        self.vis_functions.values()
    }

    pub fn pages(&self) -> impl Iterator<Item = &PageBinding> {
        self.pages.values()
    }

    pub fn stream_count(&self) -> usize {
        self.streams.len()
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    /// The page binding `vis_id` to exactly `data_ids` (order-sensitive), if any.
    pub fn find_binding(&self, vis_id: &VisId, data_ids: &[StreamId]) -> Option<&PageBinding> {
        self.binding_keys
            .get(&(vis_id.clone(), data_ids.to_vec()))
            .and_then(|id| self.pages.get(id))
    }

    pub fn pages_for_vis<'a>(&'a self, vis_id: &'a VisId) -> impl Iterator<Item = &'a PageBinding> + 'a {
        self.pages.values().filter(move |p| &p.vis_id == vis_id)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            streams: self.streams.values().cloned().collect(),
            vis_functions: self.vis_functions.values().cloned().collect(),
            pages: self.pages.values().cloned().collect(),
            change_log: self.log.clone(),
        }
    }

    /// Rebuilds a store from a snapshot, checking referential integrity and
    /// that the log is gap-free from 1.
    pub fn from_snapshot(snapshot: Snapshot) -> Result<Self, StoreError> {
        let mut store = OntologyStore::new();
        for (i, entry) in snapshot.change_log.iter().enumerate() {
            if entry.seq != i as u64 + 1 {
                return Err(StoreError::InvalidRecord(format!(
                    "change log gap: expected seq {}, found {}",
                    i + 1,
                    entry.seq
                )));
            }
        }
        store.log = snapshot.change_log;
        for s in snapshot.streams {
            s.validate()?;
            store.streams.insert(s.id.clone(), s);
        }
        for v in snapshot.vis_functions {
            if let Some(existing) = store.vis_by_name.insert(v.function_name.clone(), v.id.clone()) {
                return Err(StoreError::DuplicateFunctionName { name: v.function_name, existing });
            }
            store.vis_functions.insert(v.id.clone(), v);
        }
        for p in &snapshot.pages {
            if !store.vis_functions.contains_key(&p.vis_id) {
                return Err(StoreError::DanglingReference { kind: "vis function", id: p.vis_id.0.clone() });
            }
            if let Some(missing) = p.data_ids.iter().find(|d| !store.streams.contains_key(d)) {
                return Err(StoreError::DanglingReference { kind: "data stream", id: missing.0.clone() });
            }
            let key = (p.vis_id.clone(), p.data_ids.clone());
            if let Some(existing) = store.binding_keys.insert(key, p.id.clone()) {
                return Err(StoreError::DuplicateBinding { vis_id: p.vis_id.clone(), existing });
            }
        }
        let page_ids: BTreeSet<PageId> = snapshot.pages.iter().map(|p| p.id.clone()).collect();
        for p in snapshot.pages {
            if let Some(missing) = p.child_page_ids.iter().find(|c| !page_ids.contains(*c)) {
                return Err(StoreError::DanglingReference { kind: "page", id: missing.0.clone() });
            }
            store.pages.insert(p.id.clone(), p);
        }
        Ok(store)
    }

    /// Writes the snapshot layout into `dir`, one file per record class plus
    /// the change log. Each file is replaced atomically.
    pub fn save(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
        write_ndjson(&dir.join(STREAMS_FILE), self.streams.values())?;
        write_ndjson(&dir.join(VIS_FILE), self.vis_functions.values())?;
        write_ndjson(&dir.join(PAGES_FILE), self.pages.values())?;
        write_ndjson(&dir.join(LOG_FILE), self.log.iter())?;
        Ok(())
    }

    /// Loads a store previously written by [`OntologyStore::save`]. A missing
    /// directory or file reads as empty.
    pub fn load(dir: &Path) -> Result<Self, StoreError> {
        let snapshot = Snapshot {
            streams: read_ndjson(&dir.join(STREAMS_FILE))?,
            vis_functions: read_ndjson(&dir.join(VIS_FILE))?,
            pages: read_ndjson(&dir.join(PAGES_FILE))?,
            change_log: read_ndjson(&dir.join(LOG_FILE))?,
        };
        Self::from_snapshot(snapshot)
    }
}

#[derive(Serialize)]
struct VersionedRef<'a, T> {
    schema_version: u32,
    #[serde(flatten)]
    record: &'a T,
}

#[derive(Deserialize)]
struct Versioned<T> {
    schema_version: u32,
    #[serde(flatten)]
    record: T,
}

/// Serializes `records` one per line and renames a sibling temp file over `path`.
pub fn write_ndjson<'a, T, I>(path: &Path, records: I) -> Result<(), StoreError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let tmp = path.with_extension("ndjson.tmp");
    let file = fs::File::create(&tmp).map_err(|e| StoreError::io(&tmp, e))?;
    let mut out = std::io::BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(&VersionedRef { schema_version: SCHEMA_VERSION, record })
            .map_err(|e| StoreError::InvalidRecord(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| StoreError::io(&tmp, e))?;
    }
    let file = out.into_inner().map_err(|e| StoreError::io(&tmp, e.into_error()))?;
    file.sync_all().map_err(|e| StoreError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| StoreError::io(path, e))
}

pub fn read_ndjson<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(StoreError::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| StoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| StoreError::Corrupt { file: path.to_owned(), line: i + 1, message };
        let v: Versioned<T> = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        if v.schema_version != SCHEMA_VERSION {
            return Err(corrupt(format!("unsupported schema_version {}", v.schema_version)));
        }
        out.push(v.record);
    }
    Ok(out)
}
