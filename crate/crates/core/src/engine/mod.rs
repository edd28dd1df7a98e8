//! Search, review and activation of propagations over a shared store.

mod annotate;
mod links;
mod reference;
mod titles;

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use annotate::{annotate_keywords, KeywordAnnotation, KeywordStatus, StreamAnnotations};
pub use links::{match_dashboard_links, LinkSlot};
pub use reference::{derive_reference_query, relax_reference_specific, ReferenceContext};
pub use titles::{substitute, substitution_pairs};

use crate::grouping::{group_streams, validate_group, GroupingAlgorithm, GroupingError, GroupingThresholds};
use crate::index::{IndexError, InvertedIndex, PropagationQuery, Suggestion};
use crate::ontology::{
    read_ndjson, write_ndjson, DataStreamRecord, NewPageBinding, OntologyStore, PageBinding, PageId, StoreError, StreamId,
    VisId,
};
use crate::ranking::{check_w, group_hash as group_hash_of, order_group, position_gammas, score_group, sort_groups, CandidateGroup, DEFAULT_W};
use crate::similarity::{FeatureVectors, SimilarityBundle, SimilarityWeights};

pub const LEDGER_FILE: &str = "propagations.ndjson";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{kind} {id} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("streams {members:?} were already propagated with visualization {vis_id}")]
    DuplicatePropagation { vis_id: VisId, members: Vec<StreamId> },
    #[error("group failed validation: {0}")]
    ValidationFailed(String),
    #[error("{} dashboard link(s) unresolved: {missing:?}", missing.len())]
    LinksMissing { missing: Vec<PageId> },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

impl EngineError {
    pub fn not_found(kind: &'static str, id: impl std::fmt::Display) -> Self {
        EngineError::NotFound { kind, id: id.to_string() }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::NotFound { .. } | EngineError::Store(StoreError::NotFound { .. }) => "not_found",
            EngineError::InvalidQuery(_) => "invalid_query",
            EngineError::DuplicatePropagation { .. } | EngineError::Store(StoreError::DuplicateBinding { .. }) => {
                "duplicate_propagation"
            }
            EngineError::ValidationFailed(_) | EngineError::LinksMissing { .. } => "validation_failed",
            EngineError::Store(StoreError::InvalidRecord(_) | StoreError::DanglingReference { .. }) => "invalid_record",
            EngineError::Store(_) | EngineError::Index(_) => "internal",
        }
    }
}

impl From<GroupingError> for EngineError {
    fn from(e: GroupingError) -> Self {
        EngineError::InvalidQuery(e.to_string())
    }
}

/// Knobs of one search. Missing fields take the engine defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchParams {
    pub algorithm: GroupingAlgorithm,
    pub thresholds: GroupingThresholds,
    pub weights: SimilarityWeights,
    pub w: f64,
    pub kmeans_seed: u64,
    /// Keep groups that fail a threshold (flagged in their validation report).
    pub include_failed: bool,
    /// Move reference-specific required keywords to `must_not` when the query
    /// would otherwise find fewer than `k` streams.
    pub auto_exclude: bool,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            algorithm: GroupingAlgorithm::Bruteforce,
            thresholds: GroupingThresholds::default(),
            weights: SimilarityWeights::default(),
            w: DEFAULT_W,
            kmeans_seed: 0,
            include_failed: false,
            auto_exclude: true,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<(), EngineError> {
        self.thresholds.validate()?;
        check_w(self.w).map_err(|e| EngineError::InvalidQuery(e.to_string()))?;
        Ok(())
    }
}

/// A ranked candidate group with its review annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    #[serde(flatten)]
    pub group: CandidateGroup,
    pub annotations: Vec<StreamAnnotations>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub link_slots: Vec<LinkSlot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub page_id: PageId,
    /// The query after automatic exclusions.
    pub query: PropagationQuery,
    pub auto_excluded: Vec<String>,
    pub discovered: usize,
    pub groups: Vec<SearchResult>,
}

/// Streams already bound by `vis_id`, which includes the reference itself.
pub fn bound_streams(store: &OntologyStore, vis_id: &VisId) -> BTreeSet<StreamId> {
    store.pages_for_vis(vis_id).flat_map(|p| p.data_ids.iter().cloned()).collect()
}

fn covers_must_some(members: &[&DataStreamRecord], query: &PropagationQuery) -> bool {
    query.must_some.iter().all(|kw| members.iter().any(|m| m.keywords.contains(kw)))
}

/// Full pipeline from query to sorted, annotated candidate groups.
pub fn run_propagation_search(
    store: &OntologyStore,
    index: &InvertedIndex,
    ctx: &ReferenceContext,
    query: &PropagationQuery,
    params: &SearchParams,
) -> Result<SearchOutcome, EngineError> {
    query.validate().map_err(|e| EngineError::InvalidQuery(e.to_string()))?;
    params.validate()?;
    let k = ctx.k();
    let excluded = bound_streams(store, &ctx.page.vis_id);

    let (query, auto_excluded) = if params.auto_exclude {
        relax_reference_specific(query, index, ctx, &excluded)
    } else {
        (query.clone(), Vec::new())
    };
    let hits: Vec<&DataStreamRecord> = index
        .execute_query(&query)
        .iter()
        .filter(|id| !excluded.contains(*id))
        .filter_map(|id| store.stream(id))
        .collect();

    let mut outcome = SearchOutcome {
        page_id: ctx.page.id.clone(),
        query,
        auto_excluded,
        discovered: hits.len(),
        groups: Vec::new(),
    };
    if k == 0 || hits.len() < k {
        return Ok(outcome);
    }

    let refs = FeatureVectors::from_records(ctx.reference_streams.iter());
    let disc = FeatureVectors::from_records(hits.iter().copied());
    let bundle = SimilarityBundle::compute(&refs, &disc, params.weights);
    let raw = group_streams(params.algorithm, &bundle.s_dd, k, params.kmeans_seed)?;

    let mut candidates = Vec::new();
    for group in raw.into_iter().filter(|g| g.complete) {
        let ordered = order_group(&group.members, &bundle.s_rd).expect("complete group has k members");
        let members: Vec<&DataStreamRecord> = ordered.iter().map(|&i| hits[i]).collect();
        if !covers_must_some(&members, &outcome.query) {
            continue;
        }
        let validation = validate_group(&ordered, &bundle.s_rd, &bundle.s_dd, &params.thresholds);
        if !validation.passed && !params.include_failed {
            continue;
        }
        let score = score_group(&ordered, &bundle.s_rd, &bundle.s_dd, params.w);
        let ids = members.iter().map(|m| m.id.clone()).collect();
        candidates.push(CandidateGroup::new(ids, score, position_gammas(&ordered, &bundle.s_rd), validation));
    }

    outcome.groups = sort_groups(candidates)
        .into_iter()
        .map(|group| {
            let members: Vec<&DataStreamRecord> =
                group.ordered_member_ids.iter().filter_map(|id| store.stream(id)).collect();
            let annotations = annotate_keywords(&members, ctx, &outcome.query);
            let link_slots = match_dashboard_links(store, &ctx.page, &group.ordered_member_ids);
            SearchResult { group, annotations, link_slots }
        })
        .collect();
    Ok(outcome)
}

/// One human-approved propagation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagationRecord {
    pub source_page_id: PageId,
    pub vis_id: VisId,
    pub new_page_id: PageId,
    pub ordered_member_ids: Vec<StreamId>,
    pub decided_at: DateTime<Utc>,
}

/// Machine-readable rendering recipe for a page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageDescriptor {
    pub page_id: PageId,
    pub title: String,
    pub description: String,
    pub vis_function_name: String,
    pub data_endpoints: Vec<String>,
    pub link_targets: Vec<PageId>,
}

pub fn generate_page_descriptor(store: &OntologyStore, page_id: &PageId) -> Result<PageDescriptor, EngineError> {
    let page = store.page(page_id).ok_or_else(|| EngineError::not_found("page", page_id))?;
    let vis = store.vis_function(&page.vis_id).ok_or_else(|| EngineError::not_found("vis function", &page.vis_id))?;
    let data_endpoints = page
        .data_ids
        .iter()
        .map(|id| store.stream(id).map(|s| s.endpoint.clone()).ok_or_else(|| EngineError::not_found("stream", id)))
        .collect::<Result<_, _>>()?;
    Ok(PageDescriptor {
        page_id: page.id.clone(),
        title: page.title.clone(),
        description: page.description.clone(),
        vis_function_name: vis.function_name.clone(),
        data_endpoints,
        link_targets: page.child_page_ids.clone(),
    })
}

/// Page binding the reference would propagate to for `group`.
fn draft_page(
    store: &OntologyStore,
    ctx: &ReferenceContext,
    group: &SearchResult,
    allow_missing_links: bool,
) -> Result<NewPageBinding, EngineError> {
    let members: Vec<&DataStreamRecord> = group
        .group
        .ordered_member_ids
        .iter()
        .map(|id| store.stream(id).ok_or_else(|| EngineError::not_found("stream", id)))
        .collect::<Result<_, _>>()?;
    let mut cand_common: BTreeSet<&str> = members[0].keywords.iter().map(String::as_str).collect();
    for m in &members[1..] {
        cand_common.retain(|kw| m.keywords.contains(*kw));
    }
    let pairs = substitution_pairs(&ctx.common_keywords(), &cand_common);

    let slots = match_dashboard_links(store, &ctx.page, &group.group.ordered_member_ids);
    let missing: Vec<PageId> = slots.iter().filter(|s| !s.is_resolved()).map(|s| s.reference_child_id.clone()).collect();
    if !missing.is_empty() && !allow_missing_links {
        return Err(EngineError::LinksMissing { missing });
    }
    Ok(NewPageBinding {
        id: None,
        vis_id: ctx.page.vis_id.clone(),
        data_ids: group.group.ordered_member_ids.clone(),
        child_page_ids: slots.into_iter().filter_map(|s| s.resolved_page_id).collect(),
        title: substitute(&ctx.page.title, &pairs),
        description: substitute(&ctx.page.description, &pairs),
        is_reference: false,
    })
}

struct State {
    store: OntologyStore,
    ledger: Vec<PropagationRecord>,
}

/// Shared store, index and propagation ledger.
///
/// Reads run concurrently against an immutable index snapshot; writes hold
/// the state lock for the whole check-and-create sequence and publish a new
/// index before releasing it.
pub struct Engine {
    state: RwLock<State>,
    index: RwLock<Arc<InvertedIndex>>,
    last_results: Mutex<HashMap<PageId, Vec<SearchResult>>>,
    data_dir: Option<PathBuf>,
    defaults: SearchParams,
}

impl Engine {
    pub fn new(store: OntologyStore, defaults: SearchParams) -> Self {
        let index = InvertedIndex::build(&store);
        Self {
            state: RwLock::new(State { store, ledger: Vec::new() }),
            index: RwLock::new(Arc::new(index)),
            last_results: Mutex::new(HashMap::new()),
            data_dir: None,
            defaults,
        }
    }

    /// Loads (or starts) a store persisted under `dir`; every write is saved back.
    pub fn open(dir: &Path, defaults: SearchParams) -> Result<Self, EngineError> {
        let store = OntologyStore::load(dir)?;
        let ledger = read_ndjson(&dir.join(LEDGER_FILE))?;
        let mut engine = Self::new(store, defaults);
        engine.state.get_mut().expect("fresh lock").ledger = ledger;
        engine.data_dir = Some(dir.to_owned());
        Ok(engine)
    }

    pub fn defaults(&self) -> &SearchParams {
        &self.defaults
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    fn state(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn index(&self) -> Arc<InvertedIndex> {
        self.index.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn index_seq(&self) -> u64 {
        self.index().high_seq()
    }

    /// Runs `f` with shared access to the store.
    pub fn read<R>(&self, f: impl FnOnce(&OntologyStore) -> R) -> R {
        f(&self.state().store)
    }

    /// Runs `f` with exclusive access, then brings the index up to date and
    /// persists. Changes made before an error are kept.
    pub fn write<R>(&self, f: impl FnOnce(&mut OntologyStore) -> Result<R, StoreError>) -> Result<R, EngineError> {
        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        let result = f(&mut state.store);
        self.publish(&state)?;
        Ok(result?)
    }

    fn publish(&self, state: &State) -> Result<(), EngineError> {
        let mut index = self.index.write().unwrap_or_else(|e| e.into_inner());
        if index.high_seq() != state.store.head_seq() {
            *index = Arc::new(index.refreshed(&state.store));
        }
        drop(index);
        if let Some(dir) = &self.data_dir {
            state.store.save(dir)?;
            write_ndjson(&dir.join(LEDGER_FILE), &state.ledger)?;
        }
        Ok(())
    }

    pub fn rebuild_index(&self) -> u64 {
        let state = self.state();
        let fresh = Arc::new(InvertedIndex::build(&state.store));
        let seq = fresh.high_seq();
        *self.index.write().unwrap_or_else(|e| e.into_inner()) = fresh;
        seq
    }

    pub fn suggest(&self, prefix: &str, limit: usize) -> Vec<Suggestion> {
        self.index().suggest(prefix, limit)
    }

    pub fn ledger(&self) -> Vec<PropagationRecord> {
        self.state().ledger.clone()
    }

    pub fn reference_context(&self, page_id: &PageId) -> Result<ReferenceContext, EngineError> {
        ReferenceContext::load(&self.state().store, page_id)
    }

    pub fn reference_query(&self, page_id: &PageId) -> Result<PropagationQuery, EngineError> {
        Ok(derive_reference_query(&self.reference_context(page_id)?))
    }

    pub fn descriptor(&self, page_id: &PageId) -> Result<PageDescriptor, EngineError> {
        generate_page_descriptor(&self.state().store, page_id)
    }

    /// Searches for `page_id`; `query` defaults to the derived reference query.
    pub fn search(
        &self,
        page_id: &PageId,
        query: Option<&PropagationQuery>,
        params: Option<&SearchParams>,
    ) -> Result<SearchOutcome, EngineError> {
        let state = self.state();
        let index = self.index();
        let ctx = ReferenceContext::load(&state.store, page_id)?;
        let derived;
        let query = match query {
            Some(q) => q,
            None => {
                derived = derive_reference_query(&ctx);
                &derived
            }
        };
        let outcome = run_propagation_search(&state.store, &index, &ctx, query, params.unwrap_or(&self.defaults))?;
        drop(state);
        self.last_results
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(page_id.clone(), outcome.groups.clone());
        Ok(outcome)
    }

    /// Looks up a group by hash among the latest results for `page_id`,
    /// searching with the defaults if that page has not been searched yet.
    pub fn find_group(&self, page_id: &PageId, group_hash: &str) -> Result<SearchResult, EngineError> {
        let cached = self
            .last_results
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(page_id)
            .and_then(|groups| groups.iter().find(|g| g.group.group_hash == group_hash).cloned());
        if let Some(g) = cached {
            return Ok(g);
        }
        if let Some(g) = self.search(page_id, None, None)?.groups.into_iter().find(|g| g.group.group_hash == group_hash) {
            return Ok(g);
        }
        let vis_id = self.page(page_id)?.vis_id;
        let state = self.state();
        match state.ledger.iter().find(|r| r.vis_id == vis_id && group_hash_of(&r.ordered_member_ids) == group_hash) {
            Some(r) => Err(EngineError::DuplicatePropagation { vis_id, members: r.ordered_member_ids.clone() }),
            None => Err(EngineError::not_found("group", group_hash)),
        }
    }

    /// Creates one page per group, all or nothing.
    pub fn activate_propagation(
        &self,
        page_id: &PageId,
        groups: &[SearchResult],
        allow_missing_links: bool,
    ) -> Result<Vec<PropagationRecord>, EngineError> {
        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        let ctx = ReferenceContext::load(&state.store, page_id)?;
        let k = ctx.k();

        let mut drafts = Vec::with_capacity(groups.len());
        let mut batch: BTreeSet<&[StreamId]> = BTreeSet::new();
        for g in groups {
            let members = g.group.ordered_member_ids.as_slice();
            if members.len() != k {
                return Err(EngineError::ValidationFailed(format!("group has {} streams, reference has {k}", members.len())));
            }
            if !g.group.validation.passed {
                let failed: Vec<String> = g.group.validation.failed_criteria().map(|c| format!("{c:?}")).collect();
                let reason = g.group.validation.reason.clone().unwrap_or_else(|| failed.join(", "));
                return Err(EngineError::ValidationFailed(reason));
            }
            let duplicate = !batch.insert(members)
                || state.store.find_binding(&ctx.page.vis_id, members).is_some()
                || state.ledger.iter().any(|r| r.vis_id == ctx.page.vis_id && r.ordered_member_ids == members);
            if duplicate {
                return Err(EngineError::DuplicatePropagation { vis_id: ctx.page.vis_id.clone(), members: members.to_vec() });
            }
            drafts.push(draft_page(&state.store, &ctx, g, allow_missing_links)?);
        }

        let mut records = Vec::with_capacity(drafts.len());
        for draft in drafts {
            let members = draft.data_ids.clone();
            let page = state.store.create_page_binding(draft)?;
            let record = PropagationRecord {
                source_page_id: ctx.page.id.clone(),
                vis_id: ctx.page.vis_id.clone(),
                new_page_id: page.id,
                ordered_member_ids: members,
                decided_at: Utc::now(),
            };
            state.ledger.push(record.clone());
            records.push(record);
        }
        self.publish(&state)?;
        drop(state);
        self.last_results.lock().unwrap_or_else(|e| e.into_inner()).remove(page_id);
        Ok(records)
    }

    pub fn activate_by_hash(
        &self,
        page_id: &PageId,
        group_hash: &str,
        allow_missing_links: bool,
    ) -> Result<PropagationRecord, EngineError> {
        let group = self.find_group(page_id, group_hash)?;
        let mut records = self.activate_propagation(page_id, std::slice::from_ref(&group), allow_missing_links)?;
        Ok(records.remove(0))
    }

    pub fn page(&self, page_id: &PageId) -> Result<PageBinding, EngineError> {
        self.read(|s| s.page(page_id).cloned()).ok_or_else(|| EngineError::not_found("page", page_id))
    }
}
