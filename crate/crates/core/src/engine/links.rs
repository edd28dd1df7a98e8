use serde::{Deserialize, Serialize};

use crate::ontology::{OntologyStore, PageBinding, PageId, StreamId, VisId};

/// One child-page link of a dashboard reference, resolved for a candidate group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSlot {
    pub reference_child_id: PageId,
    pub vis_id: VisId,
    /// The candidate's streams standing in for the child's reference streams;
    /// empty when the child binds streams outside the reference.
    pub counterpart_ids: Vec<StreamId>,
    pub resolved_page_id: Option<PageId>,
}

impl LinkSlot {
    pub fn is_resolved(&self) -> bool {
        self.resolved_page_id.is_some()
    }
}

/// Resolves every child link of `reference` against the candidate group
/// `ordered` (position `i` standing in for reference stream `i`).
pub fn match_dashboard_links(store: &OntologyStore, reference: &PageBinding, ordered: &[StreamId]) -> Vec<LinkSlot> {
    reference
        .child_page_ids
        .iter()
        .filter_map(|child_id| store.page(child_id))
        .map(|child| {
            let counterpart: Option<Vec<StreamId>> = child
                .data_ids
                .iter()
                .map(|d| reference.data_ids.iter().position(|r| r == d).and_then(|p| ordered.get(p).cloned()))
                .collect();
            let resolved = counterpart
                .as_ref()
                .and_then(|c| store.find_binding(&child.vis_id, c))
                .map(|p| p.id.clone());
            LinkSlot {
                reference_child_id: child.id.clone(),
                vis_id: child.vis_id.clone(),
                counterpart_ids: counterpart.unwrap_or_default(),
                resolved_page_id: resolved,
            }
        })
        .collect()
}
