//! Partitioning discovered streams into candidate groups of the reference size.
//!
//! Two algorithms are offered: a greedy row scan of the discovered-to-discovered
//! similarity matrix, and spectral partitioning (normalised Laplacian
//! embedding followed by k-means). Both emit `⌊n/k⌋`-ish complete groups plus
//! incomplete leftovers; [`validate_group`] then applies the four threshold
//! requirements to an ordered group.

mod eigen;
mod kmeans;

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eigen::symmetric_eigen;
pub use kmeans::kmeans;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupingError {
    #[error("invalid grouping arguments: {0}")]
    InvalidArguments(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupingAlgorithm {
    #[default]
    Bruteforce,
    Spectral,
}

impl std::str::FromStr for GroupingAlgorithm {
    type Err = GroupingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bruteforce" | "brute-force" | "brute_force" => Ok(Self::Bruteforce),
            "spectral" => Ok(Self::Spectral),
            other => Err(GroupingError::InvalidArguments(format!("unknown grouping algorithm {other:?}"))),
        }
    }
}

/// Group of discovered-stream indices. `complete` is false for leftovers
/// smaller than the reference size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawGroup {
    pub members: Vec<usize>,
    pub complete: bool,
}

fn check_args(s_dd: &Array2<f64>, k: usize) -> Result<usize, GroupingError> {
    let n = s_dd.nrows();
    if s_dd.ncols() != n {
        return Err(GroupingError::InvalidArguments(format!("S_dd must be square, got {:?}", s_dd.dim())));
    }
    if k == 0 {
        return Err(GroupingError::InvalidArguments("group size k must be at least 1".into()));
    }
    if k > n {
        return Err(GroupingError::InvalidArguments(format!("group size {k} exceeds {n} discovered streams")));
    }
    Ok(n)
}

/// Row-scan grouping.
///
/// Rows are visited in index order; each unvisited row forms a group with the
/// `k - 1` unvisited streams most similar to it (lower index wins ties).
/// Streams left over once fewer than `k` remain form one incomplete group.
pub fn group_bruteforce(s_dd: &Array2<f64>, k: usize) -> Result<Vec<RawGroup>, GroupingError> {
    let n = check_args(s_dd, k)?;
    let mut visited = vec![false; n];
    let mut remaining = n;
    let mut groups = Vec::new();
    for i in 0..n {
        if visited[i] {
            continue;
        }
        if remaining < k {
            break;
        }
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i && !visited[j]).collect();
        others.sort_by(|&a, &b| s_dd[[i, b]].total_cmp(&s_dd[[i, a]]).then(a.cmp(&b)));
        let mut members = vec![i];
        members.extend(others.into_iter().take(k - 1));
        members.sort_unstable();
        for &m in &members {
            visited[m] = true;
        }
        remaining -= members.len();
        groups.push(RawGroup { members, complete: true });
    }
    let leftover: Vec<usize> = (0..n).filter(|&j| !visited[j]).collect();
    if !leftover.is_empty() {
        groups.push(RawGroup { members: leftover, complete: false });
    }
    Ok(groups)
}

/// Degree vector, Laplacian and spectral embedding of a similarity matrix.
#[derive(Debug, Clone)]
pub struct SpectralWorkspace {
    pub degrees: Vec<f64>,
    pub laplacian: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    /// n × m, columns are the generalized eigenvectors of the m smallest eigenvalues.
    pub embedding: Array2<f64>,
}

impl SpectralWorkspace {
    /// Solves `L v = λ D v` through `D^{-1/2} L D^{-1/2}` and keeps `m` columns.
    /// Zero-degree rows embed at the origin.
    pub fn build(s_dd: &Array2<f64>, m: usize) -> Self {
        let n = s_dd.nrows();
        let degrees: Vec<f64> = s_dd.rows().into_iter().map(|r| r.sum()).collect();
        let mut laplacian = -s_dd.clone();
        for i in 0..n {
            laplacian[[i, i]] += degrees[i];
        }
        let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
        let normalized = Array2::from_shape_fn((n, n), |(i, j)| inv_sqrt[i] * laplacian[[i, j]] * inv_sqrt[j]);
        let (values, vectors) = symmetric_eigen(&normalized);
        let embedding = Array2::from_shape_fn((n, m), |(i, c)| inv_sqrt[i] * vectors[[i, c]]);
        Self { degrees, laplacian, eigenvalues: values[..m].to_vec(), embedding }
    }
}

/// Extracts the `k` members of `pool` with the highest average pairwise
/// similarity, grown greedily from the most similar pair.
fn extract_dense_subset(pool: &[usize], s_dd: &Array2<f64>, k: usize) -> Vec<usize> {
    if k == 1 {
        return vec![pool[0]];
    }
    let mut seed = (pool[0], pool[1]);
    let mut best = f64::NEG_INFINITY;
    for (a, &i) in pool.iter().enumerate() {
        for &j in &pool[a + 1..] {
            if s_dd[[i, j]] > best {
                best = s_dd[[i, j]];
                seed = (i, j);
            }
        }
    }
    let mut subset = vec![seed.0, seed.1];
    while subset.len() < k {
        let next = pool
            .iter()
            .copied()
            .filter(|x| !subset.contains(x))
            .map(|x| (x, subset.iter().map(|&y| s_dd[[x, y]]).sum::<f64>()))
            .fold(None, |acc: Option<(usize, f64)>, cand| match acc {
                Some(a) if a.1 >= cand.1 => Some(a),
                _ => Some(cand),
            })
            .map(|(x, _)| x)
            .expect("pool larger than subset");
        subset.push(next);
    }
    subset.sort_unstable();
    subset
}

/// Spectral grouping with `m = ⌊n/k⌋` clusters.
///
/// Clusters larger than `k` are split by repeatedly extracting their densest
/// `k`-subset; anything smaller than `k` is returned with `complete = false`.
pub fn group_spectral(s_dd: &Array2<f64>, k: usize, seed: u64) -> Result<Vec<RawGroup>, GroupingError> {
    let n = check_args(s_dd, k)?;
    let m = n / k;
    let labels = if m == 1 {
        vec![0; n]
    } else {
        let ws = SpectralWorkspace::build(s_dd, m);
        kmeans(&ws.embedding, m, seed)
    };

    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        clusters.entry(l).or_default().push(i);
    }
    let mut clusters: Vec<Vec<usize>> = clusters.into_values().collect();
    clusters.sort_by_key(|c| c[0]);

    let mut groups = Vec::new();
    for mut pool in clusters {
        while pool.len() > k {
            let subset = extract_dense_subset(&pool, s_dd, k);
            pool.retain(|x| !subset.contains(x));
            groups.push(RawGroup { members: subset, complete: true });
        }
        let complete = pool.len() == k;
        groups.push(RawGroup { members: pool, complete });
    }
    Ok(groups)
}

pub fn group_streams(
    algorithm: GroupingAlgorithm,
    s_dd: &Array2<f64>,
    k: usize,
    seed: u64,
) -> Result<Vec<RawGroup>, GroupingError> {
    match algorithm {
        GroupingAlgorithm::Bruteforce => group_bruteforce(s_dd, k),
        GroupingAlgorithm::Spectral => group_spectral(s_dd, k, seed),
    }
}

/// Operator-controlled lower bounds; each check is a strict inequality.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupingThresholds {
    #[serde(default)]
    pub t_group: f64,
    #[serde(default)]
    pub t_stream: f64,
    #[serde(default)]
    pub s_allpair: f64,
    #[serde(default)]
    pub s_pair: f64,
}

impl GroupingThresholds {
    pub fn new(t_group: f64, t_stream: f64, s_allpair: f64, s_pair: f64) -> Result<Self, GroupingError> {
        let th = Self { t_group, t_stream, s_allpair, s_pair };
        th.validate()?;
        Ok(th)
    }

    pub fn validate(&self) -> Result<(), GroupingError> {
        for (name, v) in [
            ("t_group", self.t_group),
            ("t_stream", self.t_stream),
            ("s_allpair", self.s_allpair),
            ("s_pair", self.s_pair),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(GroupingError::InvalidArguments(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Mean reference similarity against `t_group`.
    GroupMean,
    /// Smallest reference similarity against `t_stream`.
    EveryStream,
    /// Mean pairwise similarity against `s_allpair`.
    AllPairMean,
    /// Smallest pairwise similarity against `s_pair`.
    EveryPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionCheck {
    pub criterion: Criterion,
    /// `None` when the criterion is vacuous (pairwise checks on a single stream).
    pub value: Option<f64>,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<CriterionCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl ValidationReport {
    fn rejected(reason: &str) -> Self {
        Self { passed: false, checks: Vec::new(), reason: Some(reason.to_owned()) }
    }

    pub fn failed_criteria(&self) -> impl Iterator<Item = Criterion> + '_ {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.criterion)
    }
}

/// Checks an ordered group (position `i` pairs with reference `i`) against
/// the four grouping requirements.
pub fn validate_group(
    ordered: &[usize],
    s_rd: &Array2<f64>,
    s_dd: &Array2<f64>,
    th: &GroupingThresholds,
) -> ValidationReport {
    let k = s_rd.nrows();
    if ordered.len() != k || k == 0 {
        return ValidationReport::rejected("incomplete");
    }
    let gammas: Vec<f64> = ordered.iter().enumerate().map(|(i, &d)| s_rd[[i, d]]).collect();
    let mean_gamma = gammas.iter().sum::<f64>() / k as f64;
    let min_gamma = gammas.iter().copied().fold(f64::INFINITY, f64::min);

    let pairs: Vec<f64> = (0..k)
        .flat_map(|i| ((i + 1)..k).map(move |j| (i, j)))
        .map(|(i, j)| s_dd[[ordered[i], ordered[j]]])
        .collect();
    let (pair_mean, pair_min) = if pairs.is_empty() {
        (None, None)
    } else {
        (
            Some(pairs.iter().sum::<f64>() / pairs.len() as f64),
            Some(pairs.iter().copied().fold(f64::INFINITY, f64::min)),
        )
    };

    let check = |criterion, value: Option<f64>, threshold: f64| CriterionCheck {
        criterion,
        value,
        threshold,
        passed: value.is_none_or(|v| v > threshold),
    };
    let checks = vec![
        check(Criterion::GroupMean, Some(mean_gamma), th.t_group),
        check(Criterion::EveryStream, Some(min_gamma), th.t_stream),
        check(Criterion::AllPairMean, pair_mean, th.s_allpair),
        check(Criterion::EveryPair, pair_min, th.s_pair),
    ];
    ValidationReport { passed: checks.iter().all(|c| c.passed), checks, reason: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn block_matrix(blocks: &[&[usize]], n: usize, within: f64, cross: f64) -> Array2<f64> {
        let mut label = vec![0; n];
        for (b, members) in blocks.iter().enumerate() {
            for &m in *members {
                label[m] = b;
            }
        }
        Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                1.0
            } else if label[i] == label[j] {
                within
            } else {
                cross
            }
        })
    }

    fn complete_sets(groups: &[RawGroup]) -> Vec<Vec<usize>> {
        let mut v: Vec<Vec<usize>> = groups.iter().filter(|g| g.complete).map(|g| g.members.clone()).collect();
        v.sort();
        v
    }

    #[test]
    fn bruteforce_recovers_blocks() {
        let s = block_matrix(&[&[0, 3], &[1, 4], &[2, 5]], 6, 1.0, 0.0);
        let g = group_bruteforce(&s, 2).unwrap();
        assert_eq!(complete_sets(&g), vec![vec![0, 3], vec![1, 4], vec![2, 5]]);
        assert!(g.iter().all(|g| g.complete));
    }

    #[test]
    fn bruteforce_single_group_and_leftover() {
        let s = Array2::eye(3);
        let g = group_bruteforce(&s, 3).unwrap();
        assert_eq!(g, vec![RawGroup { members: vec![0, 1, 2], complete: true }]);

        let g = group_bruteforce(&Array2::eye(5), 2).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g[2], RawGroup { members: vec![4], complete: false });
    }

    #[test]
    fn identity_groups_fail_positive_thresholds() {
        let s = Array2::eye(4);
        let g = group_bruteforce(&s, 2).unwrap();
        assert_eq!(g.len(), 2);
        let s_rd = Array2::from_elem((2, 4), 1.0);
        let th = GroupingThresholds::new(0.1, 0.1, 0.1, 0.1).unwrap();
        for group in &g {
            assert!(!validate_group(&group.members, &s_rd, &s, &th).passed);
        }
    }

    #[test]
    fn k_larger_than_n_is_rejected() {
        assert!(group_bruteforce(&Array2::eye(2), 3).is_err());
        assert!(group_spectral(&Array2::eye(2), 3, 0).is_err());
        assert!(group_bruteforce(&Array2::eye(2), 0).is_err());
    }

    #[test]
    fn spectral_recovers_blocks() {
        let s = block_matrix(&[&[0, 3], &[1, 4], &[2, 5]], 6, 1.0, 0.0);
        let g = group_spectral(&s, 2, 42).unwrap();
        assert_eq!(complete_sets(&g), vec![vec![0, 3], vec![1, 4], vec![2, 5]]);
    }

    #[test]
    fn spectral_tolerates_small_noise() {
        // two blocks of three with 0.01 cross-block noise; the best 2-way
        // partition by exhaustive search is the block split
        let s = block_matrix(&[&[0, 2, 4], &[1, 3, 5]], 6, 0.9, 0.01);
        let g = group_spectral(&s, 3, 7).unwrap();
        assert_eq!(complete_sets(&g), vec![vec![0, 2, 4], vec![1, 3, 5]]);
        assert_eq!(complete_sets(&g), complete_sets(&group_bruteforce(&s, 3).unwrap()));
    }

    #[test]
    fn spectral_single_cluster() {
        let s = Array2::from_elem((3, 3), 0.5);
        let g = group_spectral(&s, 3, 1).unwrap();
        assert_eq!(g, vec![RawGroup { members: vec![0, 1, 2], complete: true }]);
    }

    #[test]
    fn spectral_splits_oversized_clusters() {
        // a blob of five and a pair; k = 3 gives two clusters, the blob is split
        let s = block_matrix(&[&[0, 1, 2, 3, 4], &[5, 6]], 7, 0.9, 0.0);
        let g = group_spectral(&s, 3, 3).unwrap();
        let total: usize = g.iter().map(|g| g.members.len()).sum();
        assert_eq!(total, 7);
        let complete = complete_sets(&g);
        assert_eq!(complete.len(), 1);
        assert!(complete[0].iter().all(|&m| m < 5));
        assert!(g.iter().any(|g| !g.complete && g.members == vec![5, 6]));
    }

    #[test]
    fn laplacian_rows_sum_to_zero() {
        let s = block_matrix(&[&[0, 1], &[2, 3]], 4, 0.7, 0.1);
        let ws = SpectralWorkspace::build(&s, 2);
        for row in ws.laplacian.rows() {
            assert!(row.sum().abs() < 1e-9);
        }
        assert!(ws.eigenvalues[0].abs() < 1e-9);
        assert_eq!(ws.embedding.dim(), (4, 2));
    }

    #[test]
    fn zero_degree_rows_embed_at_origin() {
        let mut s = block_matrix(&[&[0, 1], &[2, 3]], 4, 1.0, 0.0);
        s[[3, 3]] = 0.0;
        s[[2, 3]] = 0.0;
        s[[3, 2]] = 0.0;
        let ws = SpectralWorkspace::build(&s, 2);
        assert!(ws.embedding.row(3).iter().all(|&x| x == 0.0));
        assert!(group_spectral(&s, 2, 0).is_ok());
    }

    #[test]
    fn dense_subset_prefers_tight_members() {
        let s = array![
            [1.0, 0.9, 0.8, 0.1],
            [0.9, 1.0, 0.85, 0.1],
            [0.8, 0.85, 1.0, 0.2],
            [0.1, 0.1, 0.2, 1.0]
        ];
        assert_eq!(extract_dense_subset(&[0, 1, 2, 3], &s, 3), vec![0, 1, 2]);
        assert_eq!(extract_dense_subset(&[0, 1, 2, 3], &s, 1), vec![0]);
    }

    #[test]
    fn validation_examples() {
        let ones = Array2::from_elem((2, 2), 1.0);
        let th = GroupingThresholds::new(0.5, 0.5, 0.5, 0.5).unwrap();
        assert!(validate_group(&[0, 1], &ones, &ones, &th).passed);

        let s_rd = array![[1.0, 0.0], [0.0, 0.0]];
        let th = GroupingThresholds::new(0.0, 0.1, 0.0, 0.0).unwrap();
        let r = validate_group(&[0, 1], &s_rd, &ones, &th);
        assert!(!r.passed);
        assert_eq!(r.failed_criteria().collect::<Vec<_>>(), vec![Criterion::EveryStream]);

        // gamma = (0.9, 0.7), lambda = 0.8, thresholds (0.75, 0.6, 0.7, 0.7)
        let s_rd = array![[0.9, 0.0], [0.0, 0.7]];
        let s_dd = array![[1.0, 0.8], [0.8, 1.0]];
        let th = GroupingThresholds::new(0.75, 0.6, 0.7, 0.7).unwrap();
        let r = validate_group(&[0, 1], &s_rd, &s_dd, &th);
        assert!(r.passed);
        assert!((r.checks[0].value.unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(r.checks[1].value, Some(0.7));
        assert_eq!(r.checks[2].value, Some(0.8));
    }

    #[test]
    fn incomplete_groups_are_rejected() {
        let s = Array2::from_elem((3, 3), 1.0);
        let r = validate_group(&[0, 1], &s, &s, &GroupingThresholds::default());
        assert!(!r.passed);
        assert_eq!(r.reason.as_deref(), Some("incomplete"));
    }

    #[test]
    fn singleton_pairwise_checks_are_vacuous() {
        let s_rd = array![[0.4]];
        let r = validate_group(&[0], &s_rd, &array![[1.0]], &GroupingThresholds::new(0.3, 0.3, 0.9, 0.9).unwrap());
        assert!(r.passed);
        assert_eq!(r.checks[2].value, None);
    }

    #[test]
    fn threshold_range() {
        assert!(GroupingThresholds::new(1.1, 0.0, 0.0, 0.0).is_err());
        assert_eq!("spectral".parse::<GroupingAlgorithm>().unwrap(), GroupingAlgorithm::Spectral);
    }
}
