use std::collections::BTreeMap;

use dvspace::decision::{
    evaluate_variants, suggest_dimensions, suggest_intervals, weights_from_intervals, Interval, IntervalSpec, Variant,
};
use dvspace::search::{DimConstraint, GroupFilter};
use dvspace::{DimensionDefinition, DomainDefinition, DomainVector, Store, UlRef};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn space() -> UlRef {
    UlRef::NumericHierarchic(vec![4, 5])
}

const AGE: usize = 0;
const SEVERITY: usize = 1;
const TREATMENT: usize = 2;
const OUTCOME: usize = 3;

type Row = [Option<i64>; 4];

fn cohort(rng: &mut ChaCha8Rng, n: usize) -> (Store, Vec<Row>) {
    let s = Store::in_memory();
    let def = DomainDefinition::new(space(), "cohort")
        .with(DimensionDefinition::integer("age").bounded(0, 120))
        .with(DimensionDefinition::integer("severity").bounded(0, 10))
        .with(DimensionDefinition::integer("treatment").bounded(1, 3))
        .with(DimensionDefinition::integer("outcome").bounded(0, 100));
    s.publish_definition(&def).unwrap();
    let rows: Vec<Row> = (0..n)
        .map(|_| {
            [
                Some(rng.gen_range(20..90)),
                rng.gen_bool(0.9).then(|| rng.gen_range(0..=10)),
                Some(rng.gen_range(1..=3)),
                rng.gen_bool(0.8).then(|| rng.gen_range(0..=100)),
            ]
        })
        .collect();
    let dvs = rows
        .iter()
        .map(|r| DomainVector::new(space(), r.iter().map(|v| v.map(Into::into)).collect()))
        .collect();
    s.insert_dvs(dvs, None).unwrap();
    (s, rows)
}

fn inside(v: Option<i64>, lo: f64, hi: f64) -> bool {
    v.is_some_and(|v| (v as f64) >= lo && (v as f64) <= hi)
}

fn moments(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    Some((m, (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()))
}

#[test]
fn variant_statistics_match_filtered_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let (store, rows) = cohort(&mut rng, 4000);
    for _ in 0..50 {
        let pre = IntervalSpec(vec![
            Interval::new(AGE, rng.gen_range(30..80) as f64, rng.gen_range(0.0..15.0), rng.gen_range(0.0..2.0)),
            Interval::new(SEVERITY, rng.gen_range(0..=10) as f64, rng.gen_range(0.0..3.0), 1.0),
        ]);
        let variants: Vec<Variant> = (1..=3).map(|t| Variant::named(format!("t{t}")).assign(TREATMENT, t as f64)).collect();
        let out = evaluate_variants(&space(), &pre, &variants, &[OUTCOME, SEVERITY], &store).unwrap();
        for (t, o) in (1..=3).zip(&out) {
            let group: Vec<&Row> = rows
                .iter()
                .filter(|r| pre.0.iter().all(|i| inside(r[i.dim], i.lower(), i.upper())) && r[TREATMENT] == Some(t))
                .collect();
            assert_eq!(o.stats.group_size, group.len() as u64);
            for ds in &o.stats.dims {
                let xs: Vec<f64> = group.iter().filter_map(|r| r[ds.dim]).map(|v| v as f64).collect();
                assert_eq!(ds.present_count, xs.len() as u64);
                match (moments(&xs), ds.mean, ds.std) {
                    (None, None, None) => {}
                    (Some((m, s)), Some(gm), Some(gs)) => {
                        assert!((m - gm).abs() <= 1e-9, "{m} vs {gm}");
                        assert!((s - gs).abs() <= 1e-9, "{s} vs {gs}");
                    }
                    other => panic!("{other:?}"),
                }
            }
        }
    }
}

#[test]
fn treatment_effect_fixture() {
    // inside the window, treatment 1 recovers at 0.8 and treatment 2 at 0.3
    let s = Store::in_memory();
    let def = DomainDefinition::new(space(), "trial")
        .with(DimensionDefinition::integer("age"))
        .with(DimensionDefinition::integer("treatment"))
        .with(DimensionDefinition::new("recovered", dvspace::model::Representation::FloatMedium));
    s.publish_definition(&def).unwrap();
    let mut dvs = Vec::new();
    for i in 0..10 {
        let rec = |p: f64| Some(dvspace::Scalar::Number(dvspace::Decimal::from_f64(p).unwrap().rescale(6).unwrap()));
        dvs.push(DomainVector::new(space(), vec![Some((50 + i % 3).into()), Some(1.into()), rec(if i < 8 { 1.0 } else { 0.0 })]));
        dvs.push(DomainVector::new(space(), vec![Some((50 + i % 3).into()), Some(2.into()), rec(if i < 3 { 1.0 } else { 0.0 })]));
        dvs.push(DomainVector::new(space(), vec![Some(90.into()), Some(2.into()), rec(1.0)]));
    }
    s.insert_dvs(dvs, None).unwrap();
    let pre = IntervalSpec(vec![Interval::new(0, 51.0, 1.0, 1.0)]);
    let out = evaluate_variants(
        &space(),
        &pre,
        &[Variant::default().assign(1, 1.0), Variant::default().assign(1, 2.0)],
        &[2],
        &s,
    )
    .unwrap();
    assert_eq!(out[0].stats.group_size, 10);
    assert_eq!(out[0].stats.dims[0].mean, Some(0.8));
    assert_eq!(out[1].stats.dims[0].mean, Some(0.3));
}

#[test]
fn suggested_intervals_follow_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (store, rows) = cohort(&mut rng, 500);
    let group = GroupFilter::ranges(vec![DimConstraint::between(AGE, 40.0, 60.0)]);
    let factors = BTreeMap::from([(OUTCOME, 1.5), (SEVERITY, 0.0)]);
    let spec = suggest_intervals(&space(), &[(OUTCOME, 55.0), (SEVERITY, 4.0), (AGE, 50.0)], &factors, &group, &store).unwrap();
    let members: Vec<&Row> = rows.iter().filter(|r| inside(r[AGE], 40.0, 60.0)).collect();
    for i in &spec.0 {
        let xs: Vec<f64> = members.iter().filter_map(|r| r[i.dim]).map(|v| v as f64).collect();
        assert!((i.spread - moments(&xs).unwrap().1).abs() < 1e-9);
        let r = factors.get(&i.dim).copied().unwrap_or(1.0);
        assert_eq!(i.lower(), i.center - r * i.spread);
        assert_eq!(i.upper(), i.center + r * i.spread);
        assert!(i.lower() <= i.center && i.center <= i.upper());
    }
    assert!(spec.get(SEVERITY).unwrap().is_exact());
    let plan = weights_from_intervals(&spec);
    for i in spec.0.iter().filter(|i| !i.is_exact()) {
        assert_eq!(plan.weights[&i.dim], 1.0 / (i.upper() - i.lower()));
    }
    assert_eq!(plan.equality, vec![DimConstraint::between(SEVERITY, 4.0, 4.0)]);
}

#[test]
fn dimension_ranking_matches_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (store, rows) = cohort(&mut rng, 700);
    let cond = [DimConstraint::range(AGE, Some(30.0), None)];
    let ranked = suggest_dimensions(&space(), &cond, &store).unwrap();
    let members: Vec<&Row> = rows.iter().filter(|r| inside(r[AGE], 30.0, f64::INFINITY)).collect();
    let mut expected: Vec<(usize, u64)> =
        (0..4).map(|d| (d, members.iter().filter(|r| r[d].is_some()).count() as u64)).filter(|x| x.1 > 0).collect();
    expected.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let got: Vec<(usize, u64)> = ranked.iter().map(|f| (f.dim, f.present_count)).collect();
    assert_eq!(got, expected);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shrinking_preconditions_never_grows_groups(seed in any::<u64>(), center in 30.0f64..80.0, s in 0.0f64..20.0, r in 0.0f64..2.0, shrink in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (store, _) = cohort(&mut rng, 300);
        let variants = [Variant::default().assign(TREATMENT, 1.0), Variant::default()];
        let wide = IntervalSpec(vec![Interval::new(AGE, center, s, r)]);
        let narrow = IntervalSpec(vec![Interval::new(AGE, center, s, r * shrink)]);
        let a = evaluate_variants(&space(), &wide, &variants, &[OUTCOME], &store).unwrap();
        let b = evaluate_variants(&space(), &narrow, &variants, &[OUTCOME], &store).unwrap();
        for (w, n) in a.iter().zip(&b) {
            prop_assert!(n.stats.group_size <= w.stats.group_size);
        }
    }
}
