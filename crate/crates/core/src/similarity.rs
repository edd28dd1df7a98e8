//! Feature-wise similarity between streams and its weighted aggregation.
//!
//! Four features are compared: data type (exact match, used as a 0/1 mask),
//! keywords (Jaccard), description and endpoint (tf-idf cosine). The
//! reference-to-discovered matrix is masked by data type; the
//! discovered-to-discovered matrix is not, since a group may mix types.
//!
//! tf-idf convention: `tf = count / doc_len`,
//! `idf = ln((1 + N) / (1 + df)) + 1`, rows are `tf * idf` without further
//! normalisation. Zero vectors have cosine 0 against everything.

use std::collections::{BTreeSet, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{DataStreamRecord, DataType, StreamId};
use crate::text::{tokenize_endpoint, tokenize_words};

/// Per-stream features in a fixed order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVectors {
    pub ids: Vec<StreamId>,
    pub keyword_sets: Vec<BTreeSet<String>>,
    pub description_docs: Vec<Vec<String>>,
    pub endpoint_docs: Vec<Vec<String>>,
    pub data_types: Vec<DataType>,
}

impl FeatureVectors {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a DataStreamRecord>) -> Self {
        let mut fv = FeatureVectors::default();
        for r in records {
            fv.ids.push(r.id.clone());
            fv.keyword_sets.push(r.keywords.clone());
            fv.description_docs.push(tokenize_words(&r.description));
            fv.endpoint_docs.push(tokenize_endpoint(&r.endpoint));
            fv.data_types.push(r.data_type);
        }
        fv
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WeightsError {
    #[error("weight {name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("weights sum to {0}, expected 1")]
    BadSum(f64),
}

/// Relative weights of keywords (`alpha`), description (`beta`) and endpoint (`theta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights")]
pub struct SimilarityWeights {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
}

#[derive(Deserialize)]
struct RawWeights {
    alpha: f64,
    beta: f64,
    theta: f64,
}

impl TryFrom<RawWeights> for SimilarityWeights {
    type Error = WeightsError;

    fn try_from(raw: RawWeights) -> Result<Self, Self::Error> {
        SimilarityWeights::new(raw.alpha, raw.beta, raw.theta)
    }
}

impl SimilarityWeights {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(alpha: f64, beta: f64, theta: f64) -> Result<Self, WeightsError> {
        for (name, value) in [("alpha", alpha), ("beta", beta), ("theta", theta)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(WeightsError::OutOfRange { name, value });
            }
        }
        let sum = alpha + beta + theta;
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(WeightsError::BadSum(sum));
        }
        Ok(Self { alpha, beta, theta })
    }
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        Self { alpha: 1.0 / 3.0, beta: 1.0 / 3.0, theta: 1.0 / 3.0 }
    }
}

/// 1 where the data types are equal, 0 elsewhere.
pub fn datatype_matrix(r_types: &[DataType], d_types: &[DataType]) -> Array2<f64> {
    Array2::from_shape_fn((r_types.len(), d_types.len()), |(i, j)| f64::from(u8::from(r_types[i] == d_types[j])))
}

/// `|a ∩ b| / |a ∪ b|`, 0 when both sets are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn jaccard_matrix(r_sets: &[BTreeSet<String>], d_sets: &[BTreeSet<String>]) -> Array2<f64> {
    Array2::from_shape_fn((r_sets.len(), d_sets.len()), |(i, j)| jaccard(&r_sets[i], &d_sets[j]))
}

/// Sparse tf-idf row: `(term index, weight)` sorted by term index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
    norm: f64,
}

impl SparseVector {
    fn from_entries(mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        Self { entries, norm }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, b) = (self.entries[i], other.entries[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Cosine similarity clamped to `[0, 1]`; 0 if either vector is zero.
    pub fn cosine(&self, other: &SparseVector) -> f64 {
        if self.norm == 0.0 || other.norm == 0.0 {
            return 0.0;
        }
        (self.dot(other) / (self.norm * other.norm)).clamp(0.0, 1.0)
    }
}

/// tf-idf model fitted on a document collection.
#[derive(Debug, Clone, Default)]
pub struct TfIdfModel {
    vocabulary: Vec<String>,
    term_index: HashMap<String, usize>,
    idf: Vec<f64>,
    doc_matrix: Vec<SparseVector>,
}

impl TfIdfModel {
    pub fn fit(documents: &[Vec<String>]) -> Self {
        let vocabulary: Vec<String> = documents
            .iter()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let term_index: HashMap<String, usize> = vocabulary.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let mut df = vec![0usize; vocabulary.len()];
        for doc in documents {
            let distinct: BTreeSet<usize> = doc.iter().map(|t| term_index[t]).collect();
            for t in distinct {
                df[t] += 1;
            }
        }
        let n = documents.len() as f64;
        let idf = df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
        let mut model = TfIdfModel { vocabulary, term_index, idf, doc_matrix: Vec::new() };
        model.doc_matrix = documents.iter().map(|d| model.vectorize(d)).collect();
        model
    }

    /// tf-idf vector of `doc` under this model; unknown terms are ignored.
    pub fn vectorize(&self, doc: &[String]) -> SparseVector {
        if doc.is_empty() {
            return SparseVector::default();
        }
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for t in doc {
            if let Some(&i) = self.term_index.get(t) {
                *counts.entry(i).or_default() += 1;
            }
        }
        let len = doc.len() as f64;
        SparseVector::from_entries(counts.into_iter().map(|(i, c)| (i, c as f64 / len * self.idf[i])).collect())
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.term_index.get(term).map(|&i| self.idf[i])
    }

    /// Rows for the fitted documents, in input order.
    pub fn doc_matrix(&self) -> &[SparseVector] {
        &self.doc_matrix
    }
}

pub fn cosine_matrix(u_docs: &[Vec<String>], v_docs: &[Vec<String>], model: &TfIdfModel) -> Array2<f64> {
    let u: Vec<SparseVector> = u_docs.iter().map(|d| model.vectorize(d)).collect();
    let v: Vec<SparseVector> = v_docs.iter().map(|d| model.vectorize(d)).collect();
    Array2::from_shape_fn((u.len(), v.len()), |(i, j)| u[i].cosine(&v[j]))
}

/// Features of one side, vectorized under models shared with the other side.
struct Vectorized {
    keywords: Vec<BTreeSet<u32>>,
    descriptions: Vec<SparseVector>,
    endpoints: Vec<SparseVector>,
}

struct SharedModels {
    description: TfIdfModel,
    endpoint: TfIdfModel,
    keyword_ids: HashMap<String, u32>,
}

impl SharedModels {
    fn fit(sides: &[&FeatureVectors]) -> Self {
        let descriptions: Vec<Vec<String>> = sides.iter().flat_map(|s| s.description_docs.iter().cloned()).collect();
        let endpoints: Vec<Vec<String>> = sides.iter().flat_map(|s| s.endpoint_docs.iter().cloned()).collect();
        let mut keyword_ids = HashMap::new();
        for kw in sides.iter().flat_map(|s| s.keyword_sets.iter().flatten()) {
            let next = keyword_ids.len() as u32;
            keyword_ids.entry(kw.clone()).or_insert(next);
        }
        Self {
            description: TfIdfModel::fit(&descriptions),
            endpoint: TfIdfModel::fit(&endpoints),
            keyword_ids,
        }
    }

    fn vectorize(&self, fv: &FeatureVectors) -> Vectorized {
        Vectorized {
            keywords: fv
                .keyword_sets
                .iter()
                .map(|set| set.iter().map(|k| self.keyword_ids[k]).collect())
                .collect(),
            descriptions: fv.description_docs.iter().map(|d| self.description.vectorize(d)).collect(),
            endpoints: fv.endpoint_docs.iter().map(|d| self.endpoint.vectorize(d)).collect(),
        }
    }
}

fn blended(a: &Vectorized, i: usize, b: &Vectorized, j: usize, w: &SimilarityWeights) -> f64 {
    let kw = jaccard(&a.keywords[i], &b.keywords[j]);
    let desc = a.descriptions[i].cosine(&b.descriptions[j]);
    let api = a.endpoints[i].cosine(&b.endpoints[j]);
    (w.alpha * kw + w.beta * desc + w.theta * api).clamp(0.0, 1.0)
}

fn s_rd_with(refs: &FeatureVectors, disc: &FeatureVectors, models: &SharedModels, w: &SimilarityWeights) -> Array2<f64> {
    let (r, d) = (models.vectorize(refs), models.vectorize(disc));
    Array2::from_shape_fn((refs.len(), disc.len()), |(i, j)| {
        if refs.data_types[i] == disc.data_types[j] {
            blended(&r, i, &d, j, w)
        } else {
            0.0
        }
    })
}

fn s_dd_with(disc: &FeatureVectors, models: &SharedModels, w: &SimilarityWeights) -> Array2<f64> {
    let d = models.vectorize(disc);
    let n = disc.len();
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = blended(&d, i, &d, j, w);
            s[[i, j]] = v;
            s[[j, i]] = v;
        }
    }
    s
}

/// `[α·ψ + β·ω_desc + θ·ω_api] ⊙ φ` between references and discovered
/// streams, with text models fitted on both sides together.
pub fn compute_s_rd(refs: &FeatureVectors, disc: &FeatureVectors, w: &SimilarityWeights) -> Array2<f64> {
    let models = SharedModels::fit(&[refs, disc]);
    s_rd_with(refs, disc, &models, w)
}

/// `α·ψ + β·ω_desc + θ·ω_api` among discovered streams, text models fitted on them alone.
pub fn compute_s_dd(disc: &FeatureVectors, w: &SimilarityWeights) -> Array2<f64> {
    let models = SharedModels::fit(&[disc]);
    s_dd_with(disc, &models, w)
}

/// Both aggregated matrices for one search, sharing text models fitted on
/// references and discovered streams together.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityBundle {
    pub s_rd: Array2<f64>,
    pub s_dd: Array2<f64>,
    pub weights: SimilarityWeights,
}

impl SimilarityBundle {
    pub fn compute(refs: &FeatureVectors, disc: &FeatureVectors, weights: SimilarityWeights) -> Self {
        let models = SharedModels::fit(&[refs, disc]);
        Self {
            s_rd: s_rd_with(refs, disc, &models, &weights),
            s_dd: s_dd_with(disc, &models, &weights),
            weights,
        }
    }
}
