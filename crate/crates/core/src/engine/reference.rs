use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::index::{InvertedIndex, PropagationQuery, Term};
use crate::ontology::{DataStreamRecord, OntologyStore, PageBinding, PageId, StreamId};

/// A page binding used as the propagation template, with its streams resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceContext {
    pub page: PageBinding,
    /// Same order as `page.data_ids`.
    pub reference_streams: Vec<DataStreamRecord>,
    /// Keyword → number of reference streams carrying it.
    pub keyword_universe: BTreeMap<String, usize>,
}

impl ReferenceContext {
    pub fn load(store: &OntologyStore, page_id: &PageId) -> Result<Self, EngineError> {
        let page = store.page(page_id).ok_or_else(|| EngineError::not_found("page", page_id))?.clone();
        let reference_streams = page
            .data_ids
            .iter()
            .map(|id| store.stream(id).cloned().ok_or_else(|| EngineError::not_found("stream", id)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut keyword_universe = BTreeMap::new();
        for s in &reference_streams {
            for kw in &s.keywords {
                *keyword_universe.entry(kw.clone()).or_insert(0) += 1;
            }
        }
        Ok(Self { page, reference_streams, keyword_universe })
    }

    pub fn k(&self) -> usize {
        self.reference_streams.len()
    }

    pub fn stream_ids(&self) -> &[StreamId] {
        &self.page.data_ids
    }

    /// Keywords carried by every reference stream.
    pub fn common_keywords(&self) -> BTreeSet<&str> {
        let k = self.k();
        self.keyword_universe.iter().filter(|(_, &c)| c == k).map(|(kw, _)| kw.as_str()).collect()
    }
}

/// Draft query: shared keywords are required, partially shared ones go to
/// `must_some`, and the reference data types are kept.
pub fn derive_reference_query(ctx: &ReferenceContext) -> PropagationQuery {
    let k = ctx.k();
    let mut q = PropagationQuery::default();
    for (kw, &count) in &ctx.keyword_universe {
        if count == k {
            q.must_all.insert(kw.clone());
        } else {
            q.must_some.insert(kw.clone());
        }
    }
    q.data_types = ctx.reference_streams.iter().map(|s| s.data_type).collect();
    q
}

/// Moves reference-specific required keywords into `must_not`.
///
/// While fewer than `k` eligible streams (outside `excluded`) match, the
/// required keyword with the fewest eligible carriers is moved, provided the
/// move lets more streams through. Returns the relaxed query and the moved
/// keywords in the order they were moved.
pub fn relax_reference_specific(
    query: &PropagationQuery,
    index: &InvertedIndex,
    ctx: &ReferenceContext,
    excluded: &BTreeSet<StreamId>,
) -> (PropagationQuery, Vec<String>) {
    let k = ctx.k();
    let eligible = |q: &PropagationQuery| index.execute_query(q).iter().filter(|id| !excluded.contains(*id)).count();
    let carriers = |kw: &str| {
        index
            .postings(&Term::keyword(kw))
            .map_or(0, |p| p.iter().filter(|id| !excluded.contains(*id)).count())
    };

    let mut relaxed = query.clone();
    let mut moved = Vec::new();
    let mut hits = eligible(&relaxed);
    while hits < k {
        let mut candidates: Vec<(usize, String)> = relaxed.must_all.iter().map(|kw| (carriers(kw), kw.clone())).collect();
        candidates.sort();
        let step = candidates.into_iter().find_map(|(_, kw)| {
            let mut next = relaxed.clone();
            next.must_all.remove(&kw);
            if !next.must_some.contains(&kw) {
                next.must_not.insert(kw.clone());
            }
            let n = eligible(&next);
            (n > hits).then_some((next, kw, n))
        });
        let Some((next, kw, n)) = step else { break };
        relaxed = next;
        moved.push(kw);
        hits = n;
    }
    (relaxed, moved)
}
