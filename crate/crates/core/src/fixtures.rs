//! Demo space used by tests, benches and the CLI: three nested groups
//! `subv0` (4 dims), `subv1` (5) and `subv2` (4), 13 flattened slots.

use crate::codec::UlRef;
use crate::model::{DimensionDefinition, DomainDefinition, DomainVector};
use crate::search::{DimConstraint, Metric, SearchQuery};
use crate::store::{Store, StoreError};

pub const DEMO_BASE: &str = "https://numericsearch.example/ds";

pub fn demo_ul(name: &str) -> UlRef {
    UlRef::FullUrl(format!("{DEMO_BASE}/{name}"))
}

/// First slot of each group in the flattened layout.
pub const SUBV1_START: usize = 4;
pub const SUBV2_START: usize = 9;
pub const DEMO_SLOTS: usize = 13;

fn group(name: &str, dims: usize) -> DomainDefinition {
    (0..dims).fold(DomainDefinition::new(demo_ul(name), name), |d, i| {
        d.with(DimensionDefinition::integer(format!("dim{i}")).bounded(0, 10))
    })
}

/// Group definitions followed by the demo space itself.
pub fn demo_definitions() -> Vec<DomainDefinition> {
    let top = DomainDefinition::new(demo_ul("demo"), "demo")
        .nesting(demo_ul("subv0"), None, "subv0")
        .nesting(demo_ul("subv1"), None, "subv1")
        .nesting(demo_ul("subv2"), None, "subv2");
    vec![group("subv0", 4), group("subv1", 5), group("subv2", 4), top]
}

/// A demo vector with `subv1` and `subv2` filled from `draw` and `subv0`
/// left absent.
pub fn demo_vector(mut draw: impl FnMut() -> i64) -> DomainVector {
    let values = (0..DEMO_SLOTS).map(|slot| (slot >= SUBV1_START).then(|| draw().into())).collect();
    DomainVector::new(demo_ul("demo"), values)
}

/// Publishes the demo definitions and inserts `n` vectors.
pub fn populate_demo(store: &Store, n: usize, mut draw: impl FnMut() -> i64) -> Result<UlRef, StoreError> {
    for d in demo_definitions() {
        store.publish_definition(&d)?;
    }
    const BATCH: usize = 4096;
    let mut left = n;
    while left > 0 {
        let take = left.min(BATCH);
        store.insert_dvs((0..take).map(|_| demo_vector(&mut draw)).collect(), None)?;
        left -= take;
    }
    Ok(demo_ul("demo"))
}

/// `subv2.dim0 = 4`, `subv2.dim1 = 7`, Euclidean, 1000 nearest.
pub fn demo_query() -> SearchQuery {
    SearchQuery::new(demo_ul("demo"), 1000, Metric::Euclidean)
        .with(DimConstraint::sim(SUBV2_START, 4.0))
        .with(DimConstraint::sim(SUBV2_START + 1, 7.0))
}
