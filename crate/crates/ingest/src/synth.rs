use std::collections::BTreeSet;

use propagator_core::ontology::{
    DataStreamRecord, DataType, NewPageBinding, OntologyStore, PageBinding, PageId, StoreError, StreamId,
    VisFunctionRecord,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::manifest::IngestError;

pub const DEFAULT_CATEGORIES: [&str; 6] =
    ["care_home", "communal_establishment", "elsewhere", "home", "hospice", "hospital"];
pub const REFERENCE_VIS_NAME: &str = "stacked_bar_v1";

const DISTRACTOR_TOKENS: [&str; 6] = ["all_places", "not_stated", "in_transit", "unknown_location", "abroad", "prison"];

/// Shape of a regional mortality corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub regions: usize,
    pub categories: Vec<String>,
    #[serde(default)]
    pub distractors: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self { regions: 20, categories: DEFAULT_CATEGORIES.map(String::from).to_vec(), distractors: 30, seed: 42 }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<(), IngestError> {
        let fail = |message: &str| Err(IngestError::InvalidManifest { source_id: "synthetic".into(), message: message.into() });
        if self.regions == 0 {
            return fail("regions must be positive");
        }
        if self.categories.is_empty() {
            return fail("categories are empty");
        }
        if self.categories.iter().collect::<BTreeSet<_>>().len() != self.categories.len() {
            return fail("categories must be distinct");
        }
        if self.categories.iter().any(|c| c.is_empty() || c.chars().any(|ch| ch.is_whitespace() || ch.is_uppercase())) {
            return fail("categories must be lowercase tokens");
        }
        Ok(())
    }

    pub fn stream_id(region: usize, category: &str) -> StreamId {
        StreamId(format!("ds-region_{region}-{category}"))
    }

    /// Ids of one region's streams in category order.
    pub fn region_ids(&self, region: usize) -> Vec<StreamId> {
        self.categories.iter().map(|c| Self::stream_id(region, c)).collect()
    }
}

fn regional_stream(id: StreamId, region: usize, token: &str) -> DataStreamRecord {
    let r = format!("region_{region}");
    DataStreamRecord::new(
        id,
        &format!("/api/v1/mortality/{r}/{token}"),
        &format!("weekly mortality in {token} for {r}"),
        ["country", "weekly", "mortality", "place_of_death", r.as_str(), token],
        DataType::Timeseries,
    )
}

/// Regions × categories streams followed by the distractors, in a fixed
/// order. Pure function of the spec.
pub fn generate_synthetic_corpus(spec: &SyntheticCorpusSpec) -> Result<Vec<DataStreamRecord>, IngestError> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.regions * spec.categories.len() + spec.distractors);
    for region in 1..=spec.regions {
        for c in &spec.categories {
            out.push(regional_stream(SyntheticCorpusSpec::stream_id(region, c), region, c));
        }
    }

    let categories: BTreeSet<&str> = spec.categories.iter().map(String::as_str).collect();
    let mut pool: Vec<String> =
        DISTRACTOR_TOKENS.iter().filter(|t| !categories.contains(*t)).map(|t| t.to_string()).collect();
    if pool.is_empty() {
        pool.push("other_0".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for j in 0..spec.distractors {
        let region = rng.random_range(1..=spec.regions);
        let token = pool.choose(&mut rng).expect("pool is non-empty");
        out.push(regional_stream(StreamId(format!("ds-distractor-{j}")), region, token));
    }
    Ok(out)
}

/// Registers the reference visualization and a reference page over
/// region 1's streams (category order). Streams must already be stored.
pub fn seed_reference_page(
    store: &mut OntologyStore,
    spec: &SyntheticCorpusSpec,
    page_id: &str,
) -> Result<PageBinding, StoreError> {
    let vis_id = match store.vis_function_by_name(REFERENCE_VIS_NAME) {
        Some(v) => v.id.clone(),
        None => store.put_vis_function(VisFunctionRecord::new(
            "vis-stacked_bar_v1",
            REFERENCE_VIS_NAME,
            "stacked bar chart of weekly deaths by place of death",
        ))?,
    };
    store.create_page_binding(NewPageBinding {
        id: Some(PageId::from(page_id)),
        vis_id,
        data_ids: spec.region_ids(1),
        child_page_ids: Vec::new(),
        title: "Weekly mortality by place of death, region_1".into(),
        description: "Weekly deaths in region_1 broken down by place of death".into(),
        is_reference: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_corpus_count() {
        let spec = SyntheticCorpusSpec { regions: 336, distractors: 0, ..Default::default() };
        assert_eq!(generate_synthetic_corpus(&spec).unwrap().len(), 2016);
    }

    #[test]
    fn tiny_corpus() {
        let spec = SyntheticCorpusSpec { regions: 1, categories: vec!["a".into()], distractors: 0, seed: 0 };
        let out = generate_synthetic_corpus(&spec).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].endpoint, "/api/v1/mortality/region_1/a");
        assert_eq!(out[0].description, "weekly mortality in a for region_1");
        assert_eq!(out[0].keywords.len(), 6);
        out[0].validate().unwrap();
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = SyntheticCorpusSpec::default();
        let a = serde_json::to_string(&generate_synthetic_corpus(&spec).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_synthetic_corpus(&spec).unwrap()).unwrap();
        assert_eq!(a, b);
        let other = SyntheticCorpusSpec { seed: 7, ..spec };
        assert_ne!(a, serde_json::to_string(&generate_synthetic_corpus(&other).unwrap()).unwrap());
    }

    #[test]
    fn distractors_replace_the_category() {
        let spec = SyntheticCorpusSpec::default();
        let out = generate_synthetic_corpus(&spec).unwrap();
        assert_eq!(out.len(), 150);
        for d in &out[120..] {
            assert!(d.id.as_str().starts_with("ds-distractor-"));
            assert!(spec.categories.iter().all(|c| !d.keywords.contains(c)));
            assert_eq!(d.keywords.len(), 6);
        }
    }

    #[test]
    fn invalid_specs() {
        let dup = SyntheticCorpusSpec { categories: vec!["a".into(), "a".into()], ..Default::default() };
        assert!(generate_synthetic_corpus(&dup).is_err());
        let empty = SyntheticCorpusSpec { categories: vec![], ..Default::default() };
        assert!(generate_synthetic_corpus(&empty).is_err());
        // a category colliding with the distractor pool is filtered out of it
        let spec = SyntheticCorpusSpec { categories: DISTRACTOR_TOKENS.map(String::from).to_vec(), regions: 2, distractors: 3, seed: 1 };
        let out = generate_synthetic_corpus(&spec).unwrap();
        assert!(out[12..].iter().all(|d| d.keywords.contains("other_0")));
    }

    #[test]
    fn reference_page_uses_region_one() {
        let spec = SyntheticCorpusSpec { regions: 2, distractors: 0, ..Default::default() };
        let mut store = OntologyStore::new();
        for r in generate_synthetic_corpus(&spec).unwrap() {
            store.put_data_stream(r).unwrap();
        }
        let page = seed_reference_page(&mut store, &spec, "pg-ref1").unwrap();
        assert_eq!(page.data_ids, spec.region_ids(1));
        assert!(page.is_reference);
        assert_eq!(store.vis_function(&page.vis_id).unwrap().function_name, REFERENCE_VIS_NAME);
    }
}
