use std::collections::BTreeSet;

use regex::{NoExpand, RegexBuilder};

/// Pairs each keyword only the reference shares with one only the candidate
/// shares, matching on the longest common prefix (then alphabetically).
pub fn substitution_pairs(ref_common: &BTreeSet<&str>, cand_common: &BTreeSet<&str>) -> Vec<(String, String)> {
    let mut from: Vec<&str> = ref_common.difference(cand_common).copied().collect();
    let mut to: Vec<&str> = cand_common.difference(ref_common).copied().collect();
    // longest tokens first so that e.g. `region_10` is handled before `region_1`
    from.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    let mut pairs = Vec::new();
    for f in from {
        if to.is_empty() {
            break;
        }
        let (best, _) = to
            .iter()
            .enumerate()
            .map(|(i, t)| (i, common_prefix(f, t)))
            .fold((0, 0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        pairs.push((f.to_owned(), to.remove(best).to_owned()));
    }
    pairs
}

fn common_prefix(a: &str, b: &str) -> usize {
    a.chars().zip(b.chars()).take_while(|(x, y)| x == y).count()
}

/// Replaces whole-word, case-insensitive occurrences of each pair's first
/// element with its second.
pub fn substitute(template: &str, pairs: &[(String, String)]) -> String {
    let mut out = template.to_owned();
    for (from, to) in pairs {
        let re = RegexBuilder::new(&format!(r"\b{}\b", regex::escape(from)))
            .case_insensitive(true)
            .build()
            .expect("escaped keyword is a valid pattern");
        out = re.replace_all(&out, NoExpand(to)).into_owned();
    }
    out
}
