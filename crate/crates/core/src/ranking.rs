//! Within-group ordering, group scoring and presentation order.

use std::cmp::Ordering;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::grouping::ValidationReport;
use crate::ontology::StreamId;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RankingError {
    #[error("group has {got} members, reference has {k}")]
    Incomplete { got: usize, k: usize },
    #[error("ranking weight W = {0} is outside [0, 1]")]
    BadWeight(String),
}

pub const DEFAULT_W: f64 = 0.5;

pub fn check_w(w: f64) -> Result<f64, RankingError> {
    if (0.0..=1.0).contains(&w) {
        Ok(w)
    } else {
        Err(RankingError::BadWeight(w.to_string()))
    }
}

/// Arranges `members` (column indices into `s_rd`) by reference position.
///
/// Repeatedly assigns the unassigned (member, position) pair with the largest
/// `s_rd[position, member]`; ties go to the lower position, then the earlier member.
pub fn order_group(members: &[usize], s_rd: &Array2<f64>) -> Result<Vec<usize>, RankingError> {
    let k = s_rd.nrows();
    if members.len() != k {
        return Err(RankingError::Incomplete { got: members.len(), k });
    }
    let mut pairs: Vec<(usize, usize)> = (0..k).flat_map(|p| (0..k).map(move |m| (p, m))).collect();
    pairs.sort_by(|&(p1, m1), &(p2, m2)| {
        s_rd[[p2, members[m2]]]
            .total_cmp(&s_rd[[p1, members[m1]]])
            .then(p1.cmp(&p2))
            .then(m1.cmp(&m2))
    });
    let mut slot = vec![None; k];
    let mut used = vec![false; k];
    let mut left = k;
    for (p, m) in pairs {
        if left == 0 {
            break;
        }
        if slot[p].is_none() && !used[m] {
            slot[p] = Some(members[m]);
            used[m] = true;
            left -= 1;
        }
    }
    Ok(slot.into_iter().map(|s| s.expect("every position assigned")).collect())
}

/// `γ` values: similarity of each ordered member to its reference position.
pub fn position_gammas(ordered: &[usize], s_rd: &Array2<f64>) -> Vec<f64> {
    ordered.iter().enumerate().map(|(i, &d)| s_rd[[i, d]]).collect()
}

/// Weighted blend of mean reference similarity and mean pairwise similarity.
/// A single-stream group scores its `γ` alone.
pub fn score_group(ordered: &[usize], s_rd: &Array2<f64>, s_dd: &Array2<f64>, w: f64) -> f64 {
    let k = ordered.len();
    let gamma: f64 = position_gammas(ordered, s_rd).iter().sum();
    if k == 1 {
        return gamma;
    }
    let mut lambda = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            lambda += s_dd[[ordered[i], ordered[j]]];
        }
    }
    w / k as f64 * gamma + 2.0 * (1.0 - w) / (k * (k - 1)) as f64 * lambda
}

/// Stable 64-bit identity of an ordered member list, as 16 hex digits.
pub fn group_hash(ordered_ids: &[StreamId]) -> String {
    let mut hasher = Sha256::new();
    for id in ordered_ids {
        hasher.update(id.as_str().as_bytes());
        hasher.update([0u8]);
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    format!("{:016x}", u64::from_be_bytes(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGroup {
    pub group_hash: String,
    pub ordered_member_ids: Vec<StreamId>,
    pub score: f64,
    pub per_position_gamma: Vec<f64>,
    pub validation: ValidationReport,
}

impl CandidateGroup {
    pub fn new(ordered_member_ids: Vec<StreamId>, score: f64, per_position_gamma: Vec<f64>, validation: ValidationReport) -> Self {
        Self { group_hash: group_hash(&ordered_member_ids), ordered_member_ids, score, per_position_gamma, validation }
    }
}

fn presentation_order(a: &CandidateGroup, b: &CandidateGroup) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.ordered_member_ids.cmp(&b.ordered_member_ids))
}

/// Descending score, ties by member ids.
pub fn sort_groups(mut groups: Vec<CandidateGroup>) -> Vec<CandidateGroup> {
    groups.sort_by(presentation_order);
    groups
}
