//! The Domain Space as a metric space: weighted distances, inclusive range
//! filters, exact k-nearest-neighbour search by linear scan, group statistics
//! and search across every space that nests a dimension.
//!
//! Ranking is by `(distance, record_id)`, so results are fully determined by
//! the store contents. Absent values never match a range filter and make a
//! vector incomparable for similarity on that dimension.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::UlRef;
use crate::exec::{filter_map, map_reduce_chunks, population_moments, Execution};
use crate::model::{DomainVector, GlobalDimensionId, Schema};
use crate::registry::Registry;
use crate::store::{Record, Snapshot, Store, StoreError};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("weight of dimension {0} must be positive")]
    NonPositiveWeight(usize),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub type Result<T, E = SearchError> = std::result::Result<T, E>;

fn invalid(msg: impl Into<String>) -> SearchError {
    SearchError::InvalidQuery(msg.into())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Manhattan,
    #[default]
    Euclidean,
}

/// One similarity term: slot, target value and weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimTerm {
    pub slot: usize,
    pub target: f64,
    pub weight: f64,
}

/// The similarity part of a query.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPoint {
    terms: Vec<SimTerm>,
}

impl SimPoint {
    pub fn new(terms: Vec<SimTerm>) -> Result<Self> {
        for t in &terms {
            if !(t.weight.is_finite() && t.weight > 0.0) {
                return Err(SearchError::NonPositiveWeight(t.slot));
            }
            if !t.target.is_finite() {
                return Err(invalid(format!("sim value of dimension {} is not finite", t.slot)));
            }
        }
        Ok(SimPoint { terms })
    }

    pub fn terms(&self) -> &[SimTerm] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Manhattan: `sum w|q - v|`; Euclidean: `sqrt(sum w (q - v)^2)`.
    /// `None` (incomparable) when any term's slot is absent.
    #[inline]
    pub fn distance_with(&self, value: impl Fn(usize) -> Option<f64>, metric: Metric) -> Option<f64> {
        let mut acc = 0.0;
        for t in &self.terms {
            let d = t.target - value(t.slot)?;
            acc += match metric {
                Metric::Manhattan => t.weight * d.abs(),
                Metric::Euclidean => t.weight * d * d,
            };
        }
        Some(match metric {
            Metric::Manhattan => acc,
            Metric::Euclidean => acc.sqrt(),
        })
    }

    pub fn distance(&self, dv: &DomainVector, metric: Metric) -> Option<f64> {
        self.distance_with(|j| dv.number(j), metric)
    }
}

/// Distance between a similarity assignment and a vector. `Ok(None)` means
/// incomparable.
pub fn distance(sim: &[(usize, f64)], weights: &[f64], dv: &DomainVector, metric: Metric) -> Result<Option<f64>> {
    if sim.len() != weights.len() {
        return Err(invalid("one weight per sim dimension is required"));
    }
    let terms = sim.iter().zip(weights).map(|(&(slot, target), &weight)| SimTerm { slot, target, weight }).collect();
    Ok(SimPoint::new(terms)?.distance(dv, metric))
}

/// Per-dimension constraint: similarity target and/or inclusive bounds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DimConstraint {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl DimConstraint {
    pub fn sim(dim: usize, v: f64) -> Self {
        DimConstraint { dim, sim: Some(v), ..Default::default() }
    }

    pub fn range(dim: usize, min: Option<f64>, max: Option<f64>) -> Self {
        DimConstraint { dim, min, max, ..Default::default() }
    }

    pub fn between(dim: usize, min: f64, max: f64) -> Self {
        Self::range(dim, Some(min), Some(max))
    }

    pub fn has_range(&self) -> bool {
        self.min.is_some() || self.max.is_some()
    }
}

fn default_k() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub space: UlRef,
    #[serde(default)]
    pub constraints: Vec<DimConstraint>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub metric: Metric,
    /// Replaces the definition's weight for the listed dimensions.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub weights: BTreeMap<usize, f64>,
    /// Hits farther than this are dropped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_distance: Option<f64>,
}

impl SearchQuery {
    pub fn new(space: UlRef, k: usize, metric: Metric) -> Self {
        SearchQuery { space, constraints: Vec::new(), k, metric, weights: BTreeMap::new(), max_distance: None }
    }

    pub fn with(mut self, c: DimConstraint) -> Self {
        self.constraints.push(c);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeFilter {
    pub slot: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl RangeFilter {
    #[inline]
    pub fn accepts(&self, v: Option<f64>) -> bool {
        match v {
            None => false,
            Some(v) => self.min.is_none_or(|lo| v >= lo) && self.max.is_none_or(|hi| v <= hi),
        }
    }
}

/// A compiled, schema-checked set of constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub ranges: Vec<RangeFilter>,
    pub point: SimPoint,
    pub metric: Metric,
    pub max_distance: Option<f64>,
}

impl Selection {
    pub fn compile(
        schema: &Schema,
        constraints: &[DimConstraint],
        weights: &BTreeMap<usize, f64>,
        metric: Metric,
        max_distance: Option<f64>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut ranges = Vec::new();
        let mut terms = Vec::new();
        for c in constraints {
            let d = schema.dim(c.dim).ok_or_else(|| {
                invalid(format!("dimension {} does not exist (space has {})", c.dim, schema.len()))
            })?;
            if !seen.insert(c.dim) {
                return Err(invalid(format!("dimension {} constrained twice", c.dim)));
            }
            if !d.is_metric() && (c.sim.is_some() || c.has_range()) {
                return Err(invalid(format!("text dimension {} ({}) cannot be searched", c.dim, d.keyword)));
            }
            for v in [c.sim, c.min, c.max].into_iter().flatten() {
                if !v.is_finite() {
                    return Err(invalid(format!("non-finite value on dimension {}", c.dim)));
                }
            }
            if c.has_range() {
                ranges.push(RangeFilter { slot: c.dim, min: c.min, max: c.max });
            }
            if let Some(target) = c.sim {
                let weight = weights.get(&c.dim).copied().unwrap_or(d.weight);
                terms.push(SimTerm { slot: c.dim, target, weight });
            }
        }
        for (&dim, &w) in weights {
            if dim >= schema.len() {
                return Err(invalid(format!("weight for unknown dimension {dim}")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(SearchError::NonPositiveWeight(dim));
            }
        }
        if let Some(md) = max_distance {
            if !(md.is_finite() && md >= 0.0) {
                return Err(invalid("max_distance must be a non-negative number"));
            }
        }
        Ok(Selection { ranges, point: SimPoint::new(terms)?, metric, max_distance })
    }

    pub fn from_query(schema: &Schema, q: &SearchQuery) -> Result<Self> {
        if q.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if !q.constraints.iter().any(|c| c.sim.is_some() || c.has_range()) {
            return Err(invalid("at least one sim, min or max value is required"));
        }
        Self::compile(schema, &q.constraints, &q.weights, q.metric, q.max_distance)
    }

    /// Distance of a record if it is selected: 0 for pure range selections.
    #[inline]
    pub fn evaluate(&self, rec: &Record) -> Option<f64> {
        if !self.ranges.iter().all(|r| r.accepts(rec.number(r.slot))) {
            return None;
        }
        if self.point.is_empty() {
            return Some(0.0);
        }
        let d = self.point.distance_with(|j| rec.number(j), self.metric)?;
        match self.max_distance {
            Some(md) if d > md => None,
            _ => Some(d),
        }
    }

    pub fn matching<'a>(&self, records: &'a [Record], exec: Execution) -> Vec<(&'a Record, f64)> {
        filter_map(records, exec, |r| self.evaluate(r).map(|d| (r, d)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub record_id: u64,
    pub distance: f64,
    #[serde(skip)]
    pub dv: DomainVector,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SearchResult {
    pub hits: Vec<Hit>,
}

const CHUNK: usize = 8192;

fn rank(a: &(f64, &Record), b: &(f64, &Record)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id))
}

/// Keeps the `k` best entries, sorted by `(distance, id)`.
fn keep_best(mut items: Vec<(f64, &Record)>, k: usize) -> Vec<(f64, &Record)> {
    if items.len() > k {
        items.select_nth_unstable_by(k - 1, rank);
        items.truncate(k);
    }
    items.sort_unstable_by(rank);
    items
}

impl Selection {
    /// The `k` nearest selected records. Each chunk keeps its own best `k`,
    /// then partial lists are merged.
    pub fn nearest<'a>(&self, records: &'a [Record], k: usize, exec: Execution) -> Vec<(f64, &'a Record)> {
        map_reduce_chunks(
            records,
            exec,
            CHUNK,
            |chunk| keep_best(chunk.iter().filter_map(|r| self.evaluate(r).map(|d| (d, r))).collect(), k),
            |mut a, b| {
                a.extend(b);
                keep_best(a, k)
            },
        )
        .unwrap_or_default()
    }
}

pub fn search_snapshot(query: &SearchQuery, snap: &Snapshot, exec: Execution) -> Result<SearchResult> {
    let sel = Selection::from_query(snap.schema(), query)?;
    Ok(SearchResult {
        hits: sel
            .nearest(snap.records(), query.k, exec)
            .into_iter()
            .map(|(distance, r)| Hit { record_id: r.id, distance, dv: r.dv.clone() })
            .collect(),
    })
}

pub fn search(query: &SearchQuery, store: &Store) -> Result<SearchResult> {
    search_with(query, store, Execution::default())
}

pub fn search_with(query: &SearchQuery, store: &Store, exec: Execution) -> Result<SearchResult> {
    let snap = store.snapshot(&query.space)?;
    search_snapshot(query, &snap, exec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimStats {
    pub dim: usize,
    pub present_count: u64,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

/// Size of a group and population moments of the requested dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStatistics {
    pub group_size: u64,
    pub dims: Vec<DimStats>,
}

impl GroupStatistics {
    pub fn dim(&self, dim: usize) -> Option<&DimStats> {
        self.dims.iter().find(|d| d.dim == dim)
    }
}

/// Filter half of a query, used for statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupFilter {
    #[serde(default)]
    pub constraints: Vec<DimConstraint>,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub weights: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_distance: Option<f64>,
}

impl GroupFilter {
    pub fn ranges(constraints: Vec<DimConstraint>) -> Self {
        GroupFilter { constraints, ..Default::default() }
    }

    pub fn compile(&self, schema: &Schema) -> Result<Selection> {
        Selection::compile(schema, &self.constraints, &self.weights, self.metric, self.max_distance)
    }
}

pub(crate) fn check_stat_dims(schema: &Schema, dims: &[usize]) -> Result<()> {
    for &d in dims {
        match schema.dim(d) {
            None => return Err(invalid(format!("statistics dimension {d} does not exist"))),
            Some(def) if !def.is_metric() => {
                return Err(invalid(format!("text dimension {d} ({}) has no statistics", def.keyword)))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Moments over the records of a group, in record order.
pub fn stats_of(group: &[&Record], stat_dims: &[usize]) -> GroupStatistics {
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(group.len()); stat_dims.len()];
    for r in group {
        for (col, &dim) in columns.iter_mut().zip(stat_dims) {
            if let Some(v) = r.number(dim) {
                col.push(v);
            }
        }
    }
    let dims = stat_dims
        .iter()
        .zip(&columns)
        .map(|(&dim, values)| {
            let m = population_moments(values);
            DimStats { dim, present_count: values.len() as u64, mean: m.map(|m| m.0), std: m.map(|m| m.1) }
        })
        .collect();
    GroupStatistics { group_size: group.len() as u64, dims }
}

pub fn group_stats_snapshot(
    filter: &GroupFilter,
    stat_dims: &[usize],
    snap: &Snapshot,
    exec: Execution,
) -> Result<GroupStatistics> {
    let sel = filter.compile(snap.schema())?;
    check_stat_dims(snap.schema(), stat_dims)?;
    let group: Vec<&Record> = sel.matching(snap.records(), exec).into_iter().map(|(r, _)| r).collect();
    Ok(stats_of(&group, stat_dims))
}

pub fn group_stats(space: &UlRef, filter: &GroupFilter, stat_dims: &[usize], store: &Store) -> Result<GroupStatistics> {
    let snap = store.snapshot(space)?;
    group_stats_snapshot(filter, stat_dims, &snap, Execution::default())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Usage {
    pub space: UlRef,
    pub slot: usize,
}

/// Every (space, flattened slot) of the latest registered versions where the
/// dimension appears, directly or through nesting.
pub fn dimension_usages(gid: &GlobalDimensionId, registry: &Registry) -> Vec<Usage> {
    let mut out = Vec::new();
    for (_, ul) in registry.spaces() {
        if let Some(p) = registry.get(ul, None) {
            for (slot, fd) in p.schema.dims.iter().enumerate() {
                if &fd.gid == gid {
                    out.push(Usage { space: ul.clone(), slot });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GidConstraint {
    pub gid: GlobalDimensionId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSpaceQuery {
    pub constraints: Vec<GidConstraint>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossHit {
    pub space: UlRef,
    pub record_id: u64,
    pub distance: f64,
    #[serde(skip)]
    pub dv: DomainVector,
}

/// Runs the query in every space whose latest version contains all
/// constrained dimensions and merges hits by `(distance, space, record_id)`.
/// A dimension that occurs in several slots of one space binds to its first
/// slot.
pub fn cross_space_search(query: &CrossSpaceQuery, store: &Store, exec: Execution) -> Result<Vec<CrossHit>> {
    if query.constraints.is_empty() {
        return Err(invalid("at least one constraint is required"));
    }
    let spaces: Vec<(UlRef, Vec<usize>)> = {
        let reg = store.registry();
        reg.spaces()
            .filter_map(|(_, ul)| {
                let schema = &reg.get(ul, None)?.schema;
                let slots = query.constraints.iter().map(|c| schema.index_of(&c.gid)).collect::<Option<Vec<_>>>()?;
                Some((ul.clone(), slots))
            })
            .collect()
    };
    let mut merged: Vec<CrossHit> = Vec::new();
    for (ul, slots) in spaces {
        let mut q = SearchQuery::new(ul.clone(), query.k, query.metric);
        q.max_distance = query.max_distance;
        for (c, slot) in query.constraints.iter().zip(slots) {
            q.constraints.push(DimConstraint { dim: slot, sim: c.sim, min: c.min, max: c.max });
        }
        let res = search_with(&q, store, exec)?;
        merged.extend(res.hits.into_iter().map(|h| CrossHit {
            space: ul.clone(),
            record_id: h.record_id,
            distance: h.distance,
            dv: h.dv,
        }));
    }
    merged.sort_by(|a, b| {
        a.distance.total_cmp(&b.distance).then_with(|| a.space.cmp(&b.space)).then(a.record_id.cmp(&b.record_id))
    });
    merged.truncate(query.k);
    Ok(merged)
}
