//! Decision support over a space: dimension roles, presence-ranked dimension
//! suggestions, interval suggestions `I_k = [x_k - r_k s_k, x_k + r_k s_k]`,
//! inverse-width weights and per-variant outcome statistics.
//!
//! Every call is stateless; the iterative loop is driven by the caller.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::codec::UlRef;
use crate::exec::{population_moments, Execution};
use crate::search::{
    check_stat_dims, stats_of, DimConstraint, GroupFilter, GroupStatistics, Metric, Result, SearchError, SearchQuery,
};
use crate::store::{Record, Snapshot, Store};

fn invalid(msg: impl Into<String>) -> SearchError {
    SearchError::InvalidQuery(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Precondition,
    Decision,
    Result,
}

/// Role per flattened dimension. Dimensions not listed are untagged.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoleTagging(pub BTreeMap<usize, Role>);

impl RoleTagging {
    pub fn tag(mut self, dim: usize, role: Role) -> Self {
        self.0.insert(dim, role);
        self
    }

    pub fn role(&self, dim: usize) -> Option<Role> {
        self.0.get(&dim).copied()
    }

    pub fn dims(&self, role: Role) -> Vec<usize> {
        self.0.iter().filter(|(_, r)| **r == role).map(|(d, _)| *d).collect()
    }

    pub fn result_dims(&self) -> Vec<usize> {
        self.dims(Role::Result)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionFrequency {
    pub dim: usize,
    pub present_count: u64,
}

/// Dimensions ranked by how many matching vectors fill them, most first,
/// ties by index. Dimensions no match fills are left out.
pub fn suggest_dimensions_snapshot(
    condition: &[DimConstraint],
    snap: &Snapshot,
    exec: Execution,
) -> Result<Vec<DimensionFrequency>> {
    if condition.iter().any(|c| c.sim.is_some()) {
        return Err(invalid("the condition takes min/max bounds only"));
    }
    let sel = GroupFilter::ranges(condition.to_vec()).compile(snap.schema())?;
    let group = sel.matching(snap.records(), exec);
    let mut counts = vec![0u64; snap.schema().len()];
    for (r, _) in &group {
        for (slot, c) in counts.iter_mut().enumerate() {
            if r.is_present(slot) {
                *c += 1;
            }
        }
    }
    let mut ranked: Vec<DimensionFrequency> = counts
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .map(|(dim, present_count)| DimensionFrequency { dim, present_count })
        .collect();
    ranked.sort_by(|a, b| b.present_count.cmp(&a.present_count).then(a.dim.cmp(&b.dim)));
    Ok(ranked)
}

pub fn suggest_dimensions(space: &UlRef, condition: &[DimConstraint], store: &Store) -> Result<Vec<DimensionFrequency>> {
    suggest_dimensions_snapshot(condition, &store.snapshot(space)?, Execution::default())
}

/// One search window `[x - r s, x + r s]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub dim: usize,
    pub center: f64,
    pub spread: f64,
    #[serde(default = "one")]
    pub factor: f64,
}

fn one() -> f64 {
    1.0
}

impl Interval {
    pub fn new(dim: usize, center: f64, spread: f64, factor: f64) -> Self {
        Interval { dim, center, spread, factor }
    }

    pub fn lower(&self) -> f64 {
        self.center - self.factor * self.spread
    }

    pub fn upper(&self) -> f64 {
        self.center + self.factor * self.spread
    }

    pub fn width(&self) -> f64 {
        self.upper() - self.lower()
    }

    /// Zero width: the interval is an equality filter.
    pub fn is_exact(&self) -> bool {
        self.spread == 0.0 || self.factor == 0.0
    }

    pub fn shifted(self, center: f64) -> Self {
        Interval { center, ..self }
    }

    pub fn constraint(&self) -> DimConstraint {
        DimConstraint::between(self.dim, self.lower(), self.upper())
    }

    fn check(&self) -> Result<()> {
        if !(self.center.is_finite() && self.spread.is_finite() && self.factor.is_finite()) {
            return Err(invalid(format!("interval on dimension {} is not finite", self.dim)));
        }
        if self.spread < 0.0 || self.factor < 0.0 {
            return Err(invalid(format!("interval on dimension {} has a negative spread or factor", self.dim)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntervalSpec(pub Vec<Interval>);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalView {
    pub dim: usize,
    pub center: f64,
    pub spread: f64,
    pub factor: f64,
    pub lower: f64,
    pub upper: f64,
    pub exact: bool,
}

impl IntervalSpec {
    pub fn get(&self, dim: usize) -> Option<&Interval> {
        self.0.iter().find(|i| i.dim == dim)
    }

    pub fn check(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for i in &self.0 {
            i.check()?;
            if !seen.insert(i.dim) {
                return Err(invalid(format!("dimension {} has two intervals", i.dim)));
            }
        }
        Ok(())
    }

    pub fn constraints(&self) -> Vec<DimConstraint> {
        self.0.iter().map(Interval::constraint).collect()
    }

    pub fn views(&self) -> Vec<IntervalView> {
        self.0
            .iter()
            .map(|i| IntervalView {
                dim: i.dim,
                center: i.center,
                spread: i.spread,
                factor: i.factor,
                lower: i.lower(),
                upper: i.upper(),
                exact: i.is_exact(),
            })
            .collect()
    }
}

/// `s_k` is the population standard deviation of dimension `k` over the
/// group; 0 when no group member fills it. `factors` default to 1.
pub fn suggest_intervals_snapshot(
    xs: &[(usize, f64)],
    factors: &BTreeMap<usize, f64>,
    group: &GroupFilter,
    snap: &Snapshot,
    exec: Execution,
) -> Result<IntervalSpec> {
    let dims: Vec<usize> = xs.iter().map(|x| x.0).collect();
    check_stat_dims(snap.schema(), &dims)?;
    let sel = group.compile(snap.schema())?;
    let members: Vec<&Record> = sel.matching(snap.records(), exec).into_iter().map(|(r, _)| r).collect();
    let spec = IntervalSpec(
        xs.iter()
            .map(|&(dim, x)| {
                let values: Vec<f64> = members.iter().filter_map(|r| r.number(dim)).collect();
                let s = population_moments(&values).map_or(0.0, |m| m.1);
                Interval::new(dim, x, s, factors.get(&dim).copied().unwrap_or(1.0))
            })
            .collect(),
    );
    spec.check()?;
    Ok(spec)
}

pub fn suggest_intervals(
    space: &UlRef,
    xs: &[(usize, f64)],
    factors: &BTreeMap<usize, f64>,
    group: &GroupFilter,
    store: &Store,
) -> Result<IntervalSpec> {
    suggest_intervals_snapshot(xs, factors, group, &store.snapshot(space)?, Execution::default())
}

/// Inverse-width weights plus the equality filters that replace zero-width
/// intervals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightPlan {
    pub weights: BTreeMap<usize, f64>,
    pub equality: Vec<DimConstraint>,
}

pub fn weights_from_intervals(spec: &IntervalSpec) -> WeightPlan {
    let mut plan = WeightPlan::default();
    for i in &spec.0 {
        if i.is_exact() || i.width() <= 0.0 {
            plan.equality.push(DimConstraint::between(i.dim, i.center, i.center));
        } else {
            plan.weights.insert(i.dim, 1.0 / i.width());
        }
    }
    plan
}

/// Similarity query around the interval centers, weighted by inverse width.
/// With `bounded`, each interval also restricts its dimension.
pub fn interval_query(space: UlRef, spec: &IntervalSpec, k: usize, metric: Metric, bounded: bool) -> SearchQuery {
    let plan = weights_from_intervals(spec);
    let mut q = SearchQuery::new(space, k, metric);
    for i in &spec.0 {
        if plan.weights.contains_key(&i.dim) {
            let mut c = DimConstraint::sim(i.dim, i.center);
            if bounded {
                c.min = Some(i.lower());
                c.max = Some(i.upper());
            }
            q.constraints.push(c);
        }
    }
    q.constraints.extend(plan.equality);
    q.weights = plan.weights;
    q
}

/// Decision-dimension bounds of one variant; an exact assignment has
/// `min == max`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub constraints: Vec<DimConstraint>,
}

impl Variant {
    pub fn named(name: impl Into<String>) -> Self {
        Variant { name: Some(name.into()), constraints: Vec::new() }
    }

    pub fn assign(mut self, dim: usize, value: f64) -> Self {
        self.constraints.push(DimConstraint::between(dim, value, value));
        self
    }

    pub fn within(mut self, dim: usize, min: f64, max: f64) -> Self {
        self.constraints.push(DimConstraint::between(dim, min, max));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub stats: GroupStatistics,
}

/// For each variant, statistics of `result_dims` over the vectors inside all
/// precondition intervals and the variant's bounds. Output follows input
/// order; all variants see the same snapshot.
pub fn evaluate_variants_snapshot(
    preconditions: &IntervalSpec,
    variants: &[Variant],
    result_dims: &[usize],
    snap: &Snapshot,
    exec: Execution,
) -> Result<Vec<VariantOutcome>> {
    if result_dims.is_empty() {
        return Err(invalid("at least one result dimension is required"));
    }
    preconditions.check()?;
    check_stat_dims(snap.schema(), result_dims)?;
    let base = preconditions.constraints();
    variants
        .iter()
        .map(|v| {
            if v.constraints.iter().any(|c| c.sim.is_some()) {
                return Err(invalid("variant constraints take min/max bounds only"));
            }
            let filter = GroupFilter::ranges(base.iter().chain(&v.constraints).copied().collect());
            let sel = filter.compile(snap.schema())?;
            let group: Vec<&Record> = sel.matching(snap.records(), exec).into_iter().map(|(r, _)| r).collect();
            Ok(VariantOutcome { name: v.name.clone(), stats: stats_of(&group, result_dims) })
        })
        .collect()
}

pub fn evaluate_variants(
    space: &UlRef,
    preconditions: &IntervalSpec,
    variants: &[Variant],
    result_dims: &[usize],
    store: &Store,
) -> Result<Vec<VariantOutcome>> {
    evaluate_variants_snapshot(preconditions, variants, result_dims, &store.snapshot(space)?, Execution::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DimensionDefinition, DomainDefinition, DomainVector};
    use crate::value::{Decimal, Scalar};

    fn ul() -> UlRef {
        UlRef::FullUrl("https://ds.example/case".into())
    }

    /// age, treatment, outcome (x100), note
    fn cases(rows: &[(i64, Option<i64>, Option<i64>)]) -> Store {
        let s = Store::in_memory();
        let d = DomainDefinition::new(ul(), "case")
            .with(DimensionDefinition::integer("age"))
            .with(DimensionDefinition::integer("treatment"))
            .with(DimensionDefinition::integer("outcome"));
        s.publish_definition(&d).unwrap();
        let dvs = rows
            .iter()
            .map(|(a, t, o)| DomainVector::new(ul(), vec![Some((*a).into()), t.map(Into::into), o.map(Into::into)]))
            .collect();
        s.insert_dvs(dvs, None).unwrap();
        s
    }

    #[test]
    fn interval_examples() {
        let i = Interval::new(0, 10.0, 2.0, 1.5);
        assert_eq!((i.lower(), i.upper()), (7.0, 13.0));
        assert!(!i.is_exact());
        let z = Interval::new(0, 10.0, 0.0, 1.5);
        assert_eq!((z.lower(), z.upper(), z.is_exact()), (10.0, 10.0, true));
        let r0 = Interval::new(0, 10.0, 2.0, 0.0);
        assert_eq!((r0.lower(), r0.upper(), r0.is_exact()), (10.0, 10.0, true));
    }

    #[test]
    fn weight_examples() {
        let plan = weights_from_intervals(&IntervalSpec(vec![Interval::new(0, 10.0, 2.0, 1.5)]));
        assert_eq!(plan.weights[&0], 1.0 / 6.0);
        let plan = weights_from_intervals(&IntervalSpec(vec![
            Interval::new(0, 5.0, 1.0, 1.0),
            Interval::new(1, 5.0, 2.0, 1.0),
            Interval::new(2, 3.0, 0.0, 1.0),
        ]));
        assert_eq!(plan.weights.get(&0), Some(&0.5));
        assert_eq!(plan.weights.get(&1), Some(&0.25));
        assert_eq!(plan.equality, vec![DimConstraint::between(2, 3.0, 3.0)]);
        let all_zero = weights_from_intervals(&IntervalSpec(vec![Interval::new(0, 1.0, 0.0, 1.0)]));
        assert!(all_zero.weights.is_empty());
        let q = interval_query(ul(), &IntervalSpec(vec![Interval::new(0, 1.0, 0.0, 1.0)]), 5, Metric::Euclidean, false);
        assert!(q.constraints.iter().all(|c| c.sim.is_none()));
    }

    #[test]
    fn suggestions() {
        let s = cases(&[(30, Some(1), Some(80)), (40, None, Some(50)), (50, Some(2), None), (60, None, None)]);
        let ranked = suggest_dimensions(&ul(), &[DimConstraint::range(0, None, Some(50.0))], &s).unwrap();
        let got: Vec<(usize, u64)> = ranked.iter().map(|f| (f.dim, f.present_count)).collect();
        assert_eq!(got, vec![(0, 3), (1, 2), (2, 2)]);
        assert!(suggest_dimensions(&ul(), &[DimConstraint::between(0, 99.0, 100.0)], &s).unwrap().is_empty());

        let spec = suggest_intervals(&ul(), &[(0, 45.0)], &BTreeMap::new(), &GroupFilter::default(), &s).unwrap();
        let std = (125.0f64).sqrt();
        assert_eq!(spec.0[0].spread, population_moments(&[30.0, 40.0, 50.0, 60.0]).unwrap().1);
        assert!((spec.0[0].spread - std).abs() < 1e-12);
        assert!(spec.0[0].lower() <= 45.0 && 45.0 <= spec.0[0].upper());
    }

    #[test]
    fn variants_compare_outcomes() {
        let s = cases(&[
            (50, Some(1), Some(80)),
            (52, Some(1), Some(80)),
            (51, Some(2), Some(30)),
            (49, Some(2), Some(30)),
            (80, Some(1), Some(0)),
        ]);
        let pre = IntervalSpec(vec![Interval::new(0, 50.0, 5.0, 1.0)]);
        let variants = [
            Variant::named("t1").assign(1, 1.0),
            Variant::named("t2").assign(1, 2.0),
            Variant::named("t3").assign(1, 3.0),
            Variant::named("t1 again").assign(1, 1.0),
        ];
        let out = evaluate_variants(&ul(), &pre, &variants, &[2], &s).unwrap();
        assert_eq!(out[0].stats.group_size, 2);
        assert_eq!(out[0].stats.dims[0].mean, Some(80.0));
        assert_eq!(out[1].stats.dims[0].mean, Some(30.0));
        assert_eq!(out[2].stats.group_size, 0);
        assert_eq!(out[0].stats, out[3].stats);
        assert!(evaluate_variants(&ul(), &pre, &variants, &[], &s).is_err());
    }

    #[test]
    fn decimal_values_filter_by_interval() {
        let s = Store::in_memory();
        let d = DomainDefinition::new(ul(), "m").with(DimensionDefinition::new(
            "dose",
            crate::model::Representation::FloatMedium,
        ));
        s.publish_definition(&d).unwrap();
        let v = |m: i64| Some(Scalar::Number(Decimal::new(m, 6)));
        s.insert_dv(DomainVector::new(ul(), vec![v(1_500_000)])).unwrap();
        s.insert_dv(DomainVector::new(ul(), vec![v(2_500_000)])).unwrap();
        let pre = IntervalSpec(vec![Interval::new(0, 1.5, 0.0, 1.0)]);
        let out = evaluate_variants(&ul(), &pre, &[Variant::default()], &[0], &s).unwrap();
        assert_eq!(out[0].stats.group_size, 1);
    }
}
