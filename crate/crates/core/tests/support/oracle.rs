//! Straightforward reference implementations and random instance generators
//! shared by the property tests and the acceptance suite.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use propagator_core::index::PropagationQuery;
use propagator_core::ontology::{DataStreamRecord, DataType, StreamId};
use rand::seq::IndexedRandom;
use rand::Rng;

const KEYWORDS: [&str; 12] = [
    "weekly", "daily", "mortality", "cases", "region_1", "region_2", "region_3", "home", "hospital", "hospice",
    "country", "age_group",
];
const WORDS: [&str; 10] = ["weekly", "deaths", "in", "care", "homes", "for", "region", "positive", "tests", "daily"];
const SEGMENTS: [&str; 8] = ["api", "v1", "mortality", "cases", "region_1", "region_2", "home", "data"];
const TYPES: [DataType; 3] = [DataType::Timeseries, DataType::CumulativeTimeseries, DataType::Geo];

pub fn random_record<R: Rng>(rng: &mut R, id: usize) -> DataStreamRecord {
    let kw_count = rng.random_range(1..=4);
    let keywords: Vec<&str> = (0..kw_count).map(|_| *KEYWORDS.choose(rng).unwrap()).collect();
    let words = rng.random_range(0..=6);
    let description: Vec<&str> = (0..words).map(|_| *WORDS.choose(rng).unwrap()).collect();
    let segs = rng.random_range(1..=4);
    let endpoint: Vec<&str> = (0..segs).map(|_| *SEGMENTS.choose(rng).unwrap()).collect();
    DataStreamRecord::new(
        format!("ds-{id:04}"),
        &format!("/{}", endpoint.join("/")),
        &description.join(" "),
        keywords,
        *TYPES.choose(rng).unwrap(),
    )
}

pub fn random_records<R: Rng>(rng: &mut R, n: usize) -> Vec<DataStreamRecord> {
    (0..n).map(|i| random_record(rng, i)).collect()
}

pub fn random_query<R: Rng>(rng: &mut R) -> PropagationQuery {
    let mut q = PropagationQuery::default();
    let pick = |rng: &mut R, max: usize| -> BTreeSet<String> {
        let n = rng.random_range(0..=max);
        (0..n).map(|_| KEYWORDS.choose(rng).unwrap().to_string()).collect()
    };
    q.must_all = pick(rng, 2);
    q.must_some = pick(rng, 3);
    q.must_not = pick(rng, 2);
    q.must_not.retain(|k| !q.must_all.contains(k) && !q.must_some.contains(k));
    let types = rng.random_range(0..=2);
    q.data_types = (0..types).map(|_| *TYPES.choose(rng).unwrap()).collect();
    if rng.random_bool(0.3) {
        let len = rng.random_range(1..=4);
        let phrase: Vec<&str> = (0..len).map(|_| *WORDS.choose(rng).unwrap()).collect();
        q.free_text.push(phrase.join(" "));
    }
    q
}

fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn endpoint_tokens(endpoint: &str) -> Vec<String> {
    endpoint
        .split(|c: char| "/?&=.-_:#".contains(c) || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    needle.is_empty() || haystack.windows(needle.len()).any(|w| w == needle)
}

fn phrase_matches(description: &str, phrase: &str) -> bool {
    let doc = words(description);
    let p = words(phrase);
    if p.len() <= 3 {
        contains_run(&doc, &p)
    } else {
        p.windows(3).all(|w| contains_run(&doc, w))
    }
}

/// Linear-scan evaluation of the four-clause query plus free text.
pub fn scan_query(records: &[DataStreamRecord], q: &PropagationQuery) -> BTreeSet<StreamId> {
    records
        .iter()
        .filter(|r| q.must_all.iter().all(|k| r.keywords.contains(k)))
        .filter(|r| q.must_some.is_empty() || q.must_some.iter().any(|k| r.keywords.contains(k)))
        .filter(|r| !q.must_not.iter().any(|k| r.keywords.contains(k)))
        .filter(|r| q.data_types.is_empty() || q.data_types.contains(&r.data_type))
        .filter(|r| q.free_text.iter().all(|p| phrase_matches(&r.description, p)))
        .map(|r| r.id.clone())
        .collect()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// Dense tf-idf rows over a collection: `tf = count / len`,
/// `idf = ln((1 + N) / (1 + df)) + 1`.
fn tfidf_rows(docs: &[Vec<String>]) -> Vec<Vec<f64>> {
    let vocab: Vec<&String> = docs.iter().flatten().collect::<BTreeSet<_>>().into_iter().collect();
    let n = docs.len() as f64;
    let idf: Vec<f64> = vocab
        .iter()
        .map(|t| {
            let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
            ((1.0 + n) / (1.0 + df)).ln() + 1.0
        })
        .collect();
    docs.iter()
        .map(|d| {
            vocab
                .iter()
                .zip(&idf)
                .map(|(t, idf)| {
                    if d.is_empty() {
                        0.0
                    } else {
                        d.iter().filter(|x| x == t).count() as f64 / d.len() as f64 * idf
                    }
                })
                .collect()
        })
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

/// `(S_rd, S_dd)` as nested vectors, text statistics over references and
/// discovered streams together.
pub fn similarity_oracle(
    refs: &[DataStreamRecord],
    disc: &[DataStreamRecord],
    (alpha, beta, theta): (f64, f64, f64),
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let all: Vec<&DataStreamRecord> = refs.iter().chain(disc).collect();
    let desc = tfidf_rows(&all.iter().map(|r| words(&r.description)).collect::<Vec<_>>());
    let api = tfidf_rows(&all.iter().map(|r| endpoint_tokens(&r.endpoint)).collect::<Vec<_>>());
    let blend = |a: usize, b: usize| {
        alpha * jaccard(&all[a].keywords, &all[b].keywords) + beta * cosine(&desc[a], &desc[b]) + theta * cosine(&api[a], &api[b])
    };
    let k = refs.len();
    let s_rd = (0..k)
        .map(|i| {
            (0..disc.len())
                .map(|j| if refs[i].data_type == disc[j].data_type { blend(i, k + j) } else { 0.0 })
                .collect()
        })
        .collect();
    let s_dd = (0..disc.len()).map(|i| (0..disc.len()).map(|j| blend(k + i, k + j)).collect()).collect();
    (s_rd, s_dd)
}

/// Every partition of `0..n` into blocks of size `k` (n divisible by k),
/// scored by total within-block similarity; returns the best one.
pub fn best_partition(s: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    fn rec(left: &[usize], k: usize, s: &[Vec<f64>], cur: &mut Vec<Vec<usize>>, best: &mut (f64, Vec<Vec<usize>>)) {
        if left.is_empty() {
            let score: f64 = cur
                .iter()
                .map(|b| b.iter().flat_map(|&i| b.iter().map(move |&j| (i, j))).map(|(i, j)| s[i][j]).sum::<f64>())
                .sum();
            if score > best.0 {
                *best = (score, cur.clone());
            }
            return;
        }
        let first = left[0];
        let rest = &left[1..];
        for combo in combinations(rest, k - 1) {
            let mut block = vec![first];
            block.extend(&combo);
            let remaining: Vec<usize> = rest.iter().copied().filter(|x| !combo.contains(x)).collect();
            cur.push(block);
            rec(&remaining, k, s, cur, best);
            cur.pop();
        }
    }
    let items: Vec<usize> = (0..s.len()).collect();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    rec(&items, k, s, &mut Vec::new(), &mut best);
    let mut blocks = best.1;
    blocks.sort();
    blocks
}

fn combinations(items: &[usize], r: usize) -> Vec<Vec<usize>> {
    if r == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        for mut tail in combinations(&items[i + 1..], r - 1) {
            tail.insert(0, x);
            out.push(tail);
        }
    }
    out
}

/// Symmetric block-diagonal similarity with `blocks` blocks of size `k`
/// shuffled over the indices, within-block entries in [0.7, 1] and
/// cross-block noise in [0, noise]. Returns the matrix and the true blocks.
pub fn block_instance<R: Rng>(rng: &mut R, blocks: usize, k: usize, noise: f64) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let n = blocks * k;
    let mut perm: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), rng);
    let label: BTreeMap<usize, usize> = perm.iter().enumerate().map(|(pos, &idx)| (idx, pos / k)).collect();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        s[i][i] = 1.0;
        for j in (i + 1)..n {
            let v = if label[&i] == label[&j] { rng.random_range(0.7..=1.0) } else { rng.random_range(0.0..=noise) };
            s[i][j] = v;
            s[j][i] = v;
        }
    }
    let mut truth: Vec<Vec<usize>> = (0..blocks)
        .map(|b| {
            let mut m: Vec<usize> = (0..n).filter(|i| label[i] == b).collect();
            m.sort_unstable();
            m
        })
        .collect();
    truth.sort();
    (s, truth)
}
