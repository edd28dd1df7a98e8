use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::reference::ReferenceContext;
use crate::index::PropagationQuery;
use crate::ontology::{DataStreamRecord, StreamId};
use crate::text::tokenize_words;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeywordStatus {
    Unmatched,
    MatchedInOrder,
    MatchedOutOfOrder,
    HiddenCommon,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordAnnotation {
    pub keyword: String,
    pub status: KeywordStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamAnnotations {
    pub stream_id: StreamId,
    /// Unmatched first, then in-order, out-of-order and hidden keywords.
    pub keywords: Vec<KeywordAnnotation>,
}

/// Classifies every keyword of every member of an ordered group.
pub fn annotate_keywords(
    members: &[&DataStreamRecord],
    ctx: &ReferenceContext,
    query: &PropagationQuery,
) -> Vec<StreamAnnotations> {
    let mut query_terms: BTreeSet<String> = query.must_all.iter().chain(&query.must_some).cloned().collect();
    query_terms.extend(query.free_text.iter().flat_map(|t| tokenize_words(t)));

    let ref_common = ctx.common_keywords();
    let in_all_members = |kw: &str| members.iter().all(|m| m.keywords.contains(kw));

    members
        .iter()
        .enumerate()
        .map(|(pos, member)| {
            let mut keywords: Vec<KeywordAnnotation> = member
                .keywords
                .iter()
                .map(|kw| {
                    let status = if ref_common.contains(kw.as_str()) && in_all_members(kw) {
                        KeywordStatus::HiddenCommon
                    } else if !query_terms.contains(kw) {
                        KeywordStatus::Unmatched
                    } else if ctx.reference_streams.get(pos).is_some_and(|r| r.keywords.contains(kw)) {
                        KeywordStatus::MatchedInOrder
                    } else {
                        KeywordStatus::MatchedOutOfOrder
                    };
                    KeywordAnnotation { keyword: kw.clone(), status }
                })
                .collect();
            keywords.sort_by(|a, b| a.status.cmp(&b.status).then_with(|| a.keyword.cmp(&b.keyword)));
            StreamAnnotations { stream_id: member.id.clone(), keywords }
        })
        .collect()
}
