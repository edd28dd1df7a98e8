//! Inverted index over stream keywords, description n-grams and data types.
//!
//! Keywords are posted verbatim. Descriptions contribute their words plus
//! adjacent word pairs and triples, so that partial phrases hit and the
//! type-ahead has something to suggest. The index is a value: applying the
//! change log produces a new index and leaves the old one untouched.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{ChangeKind, DataStreamRecord, DataType, OntologyStore, StreamId};
use crate::text::tokenize_words;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Word,
    Gram2,
    Gram3,
    Keyword,
    Datatype,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Term {
    pub text: String,
    pub kind: TermKind,
}

impl Term {
    pub fn new(text: impl Into<String>, kind: TermKind) -> Self {
        Self { text: text.into(), kind }
    }

    pub fn keyword(text: &str) -> Self {
        Self::new(text, TermKind::Keyword)
    }

    pub fn datatype(t: DataType) -> Self {
        Self::new(t.as_str(), TermKind::Datatype)
    }
}

/// Words, word pairs and word triples of a description, in text order.
pub fn tokenize_description(text: &str) -> Vec<Term> {
    let words = tokenize_words(text);
    let mut terms: Vec<Term> = words.iter().map(|w| Term::new(w.clone(), TermKind::Word)).collect();
    terms.extend(words.windows(2).map(|w| Term::new(w.join(" "), TermKind::Gram2)));
    terms.extend(words.windows(3).map(|w| Term::new(w.join(" "), TermKind::Gram3)));
    terms
}

/// The terms a free-text phrase must match: the phrase itself when it is at
/// most three words long, otherwise every word triple it contains.
fn phrase_terms(phrase: &str) -> Vec<Term> {
    let words = tokenize_words(phrase);
    match words.len() {
        0 => Vec::new(),
        1 => vec![Term::new(words[0].clone(), TermKind::Word)],
        2 => vec![Term::new(words.join(" "), TermKind::Gram2)],
        3 => vec![Term::new(words.join(" "), TermKind::Gram3)],
        _ => words.windows(3).map(|w| Term::new(w.join(" "), TermKind::Gram3)).collect(),
    }
}

/// Every term a stream is posted under, deduplicated.
pub fn stream_terms(record: &DataStreamRecord) -> BTreeSet<Term> {
    let mut terms: BTreeSet<Term> = record.keywords.iter().map(|k| Term::keyword(k)).collect();
    terms.insert(Term::datatype(record.data_type));
    terms.extend(tokenize_description(&record.description));
    terms
}

/// The four clause groups built in the search UI, plus optional free text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagationQuery {
    #[serde(default)]
    pub must_all: BTreeSet<String>,
    #[serde(default)]
    pub must_some: BTreeSet<String>,
    #[serde(default)]
    pub must_not: BTreeSet<String>,
    #[serde(default)]
    pub data_types: BTreeSet<DataType>,
    #[serde(default)]
    pub free_text: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("keyword {0:?} is both required and excluded")]
    RequiredAndExcluded(String),
    #[error("keyword {0:?} is both in must_some and excluded")]
    SomeAndExcluded(String),
}

impl PropagationQuery {
    pub fn validate(&self) -> Result<(), QueryError> {
        if let Some(k) = self.must_all.intersection(&self.must_not).next() {
            return Err(QueryError::RequiredAndExcluded(k.clone()));
        }
        if let Some(k) = self.must_some.intersection(&self.must_not).next() {
            return Err(QueryError::SomeAndExcluded(k.clone()));
        }
        Ok(())
    }

    /// Keywords the query mentions positively.
    pub fn positive_keywords(&self) -> BTreeSet<&str> {
        self.must_all.iter().chain(&self.must_some).map(String::as_str).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IndexError {
    #[error("change log cannot be applied from seq {from_seq}: index is at {high_seq}, store at {store_seq}; rebuild required")]
    RebuildRequired { from_seq: u64, high_seq: u64, store_seq: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub text: String,
    /// Size of the largest posting list among the term kinds sharing this text.
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InvertedIndex {
    postings: HashMap<Term, BTreeSet<StreamId>>,
    doc_terms: HashMap<StreamId, BTreeSet<Term>>,
    high_seq: u64,
}

impl InvertedIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Indexes every stream of `store` and records its log head.
    pub fn build(store: &OntologyStore) -> Self {
        let mut index = Self::new();
        for record in store.streams() {
            index.upsert(record);
        }
        index.high_seq = store.head_seq();
        index
    }

    pub fn high_seq(&self) -> u64 {
        self.high_seq
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn stream_count(&self) -> usize {
        self.doc_terms.len()
    }

    pub fn postings(&self, term: &Term) -> Option<&BTreeSet<StreamId>> {
        self.postings.get(term)
    }

    fn upsert(&mut self, record: &DataStreamRecord) {
        self.remove(&record.id);
        let terms = stream_terms(record);
        for term in &terms {
            self.postings.entry(term.clone()).or_default().insert(record.id.clone());
        }
        self.doc_terms.insert(record.id.clone(), terms);
    }

    fn remove(&mut self, id: &StreamId) {
        let Some(old) = self.doc_terms.remove(id) else { return };
        for term in old {
            if let Some(ids) = self.postings.get_mut(&term) {
                ids.remove(id);
                if ids.is_empty() {
                    self.postings.remove(&term);
                }
            }
        }
    }

    /// Replays the store's change log from `from_seq`, which must directly
    /// follow this index's high-water mark.
    pub fn apply_change_log(&self, store: &OntologyStore, from_seq: u64) -> Result<InvertedIndex, IndexError> {
        let store_seq = store.head_seq();
        if from_seq != self.high_seq + 1 || store_seq < self.high_seq {
            return Err(IndexError::RebuildRequired { from_seq, high_seq: self.high_seq, store_seq });
        }
        let mut next = self.clone();
        for entry in store.read_change_log(from_seq) {
            if entry.kind != ChangeKind::PutStream {
                continue;
            }
            let id = StreamId(entry.payload_id.clone());
            match store.stream(&id) {
                Some(record) => next.upsert(record),
                None => next.remove(&id),
            }
        }
        next.high_seq = store_seq;
        Ok(next)
    }

    /// Applies any unseen log entries, falling back to a full rebuild.
    pub fn refreshed(&self, store: &OntologyStore) -> InvertedIndex {
        self.apply_change_log(store, self.high_seq + 1)
            .unwrap_or_else(|_| InvertedIndex::build(store))
    }

    fn keyword_union<'a>(&self, keywords: impl IntoIterator<Item = &'a String>) -> BTreeSet<StreamId> {
        keywords
            .into_iter()
            .filter_map(|k| self.postings.get(&Term::keyword(k)))
            .flat_map(|ids| ids.iter().cloned())
            .collect()
    }

    /// Stream ids satisfying every clause of `q`. Empty clauses do not constrain.
    pub fn execute_query(&self, q: &PropagationQuery) -> BTreeSet<StreamId> {
        let empty = BTreeSet::new();
        let mut required: Vec<&BTreeSet<StreamId>> = q
            .must_all
            .iter()
            .map(|k| self.postings.get(&Term::keyword(k)).unwrap_or(&empty))
            .collect();
        for phrase in &q.free_text {
            for term in phrase_terms(phrase) {
                required.push(self.postings.get(&term).unwrap_or(&empty));
            }
        }
        required.sort_by_key(|ids| ids.len());

        let mut result: BTreeSet<StreamId> = match required.split_first() {
            Some((first, rest)) => first
                .iter()
                .filter(|id| rest.iter().all(|ids| ids.contains(*id)))
                .cloned()
                .collect(),
            None => self.doc_terms.keys().cloned().collect(),
        };

        if !q.must_some.is_empty() {
            let some = self.keyword_union(&q.must_some);
            result.retain(|id| some.contains(id));
        }
        if !q.data_types.is_empty() {
            let typed: BTreeSet<StreamId> = q
                .data_types
                .iter()
                .filter_map(|t| self.postings.get(&Term::datatype(*t)))
                .flat_map(|ids| ids.iter().cloned())
                .collect();
            result.retain(|id| typed.contains(id));
        }
        if !q.must_not.is_empty() {
            let excluded = self.keyword_union(&q.must_not);
            result.retain(|id| !excluded.contains(id));
        }
        result
    }

    /// Terms starting with `prefix`, most frequent first, then alphabetical.
    pub fn suggest(&self, prefix: &str, limit: usize) -> Vec<Suggestion> {
        let prefix = prefix.to_lowercase();
        let mut by_text: BTreeMap<&str, usize> = BTreeMap::new();
        for (term, ids) in &self.postings {
            if term.text.starts_with(&prefix) {
                let count = by_text.entry(term.text.as_str()).or_default();
                *count = (*count).max(ids.len());
            }
        }
        let mut out: Vec<Suggestion> = by_text
            .into_iter()
            .map(|(text, count)| Suggestion { text: text.to_owned(), count })
            .collect();
        out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.text.cmp(&b.text)));
        out.truncate(limit.max(1));
        out
    }
}
