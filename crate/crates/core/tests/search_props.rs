use std::collections::BTreeMap;

use dvspace::fixtures::{demo_query, populate_demo, SUBV2_START};
use dvspace::search::{distance, search_with, DimConstraint, Metric, SearchQuery};
use dvspace::store::Record;
use dvspace::{DimensionDefinition, DomainDefinition, DomainVector, Execution, Store, UlRef};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIMS: usize = 4;

fn space() -> UlRef {
    UlRef::FullUrl("https://ds.example/grid".into())
}

fn dv(values: &[Option<i64>]) -> DomainVector {
    DomainVector::new(space(), values.iter().map(|v| v.map(Into::into)).collect())
}

fn full(values: &[i64]) -> Vec<(usize, f64)> {
    values.iter().enumerate().map(|(i, v)| (i, *v as f64)).collect()
}

fn point() -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-1000i64..1000, DIMS)
}

fn d(a: &[i64], b: &[i64], w: &[f64], m: Metric) -> f64 {
    let b: Vec<Option<i64>> = b.iter().map(|x| Some(*x)).collect();
    distance(&full(a), w, &dv(&b), m).unwrap().unwrap()
}

/// Store with `n` vectors of `DIMS` small integers, about one value in ten
/// absent.
fn random_store(rng: &mut ChaCha8Rng, n: usize) -> Store {
    let s = Store::in_memory();
    let def = (0..DIMS).fold(DomainDefinition::new(space(), "grid"), |d, i| {
        d.with(DimensionDefinition::integer(format!("g{i}")).with_weight(1.0 + i as f64))
    });
    s.publish_definition(&def).unwrap();
    let dvs = (0..n)
        .map(|_| {
            let v: Vec<Option<i64>> = (0..DIMS).map(|_| (rng.gen_range(0..10) > 0).then(|| rng.gen_range(0..=20))).collect();
            dv(&v)
        })
        .collect();
    s.insert_dvs(dvs, None).unwrap();
    s
}

/// Independent brute-force k-NN: filter, score in constraint order, sort by
/// (distance, id).
fn oracle(records: &[Record], q: &SearchQuery, def_weights: &[f64]) -> Vec<(u64, f64)> {
    let mut scored = Vec::new();
    'rec: for r in records {
        for c in &q.constraints {
            if c.min.is_some() || c.max.is_some() {
                let Some(v) = r.number(c.dim) else { continue 'rec };
                if c.min.is_some_and(|lo| v < lo) || c.max.is_some_and(|hi| v > hi) {
                    continue 'rec;
                }
            }
        }
        let mut acc = 0.0;
        for c in &q.constraints {
            if let Some(t) = c.sim {
                let Some(v) = r.number(c.dim) else { continue 'rec };
                let w = q.weights.get(&c.dim).copied().unwrap_or(def_weights[c.dim]);
                acc += match q.metric {
                    Metric::Manhattan => w * (t - v).abs(),
                    Metric::Euclidean => w * (t - v) * (t - v),
                };
            }
        }
        let dist = if q.metric == Metric::Euclidean { acc.sqrt() } else { acc };
        if q.max_distance.is_some_and(|m| dist > m) {
            continue;
        }
        scored.push((r.id, dist));
    }
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    scored.truncate(q.k);
    scored
}

fn random_query(rng: &mut ChaCha8Rng) -> SearchQuery {
    let metric = if rng.gen_bool(0.5) { Metric::Euclidean } else { Metric::Manhattan };
    let mut q = SearchQuery::new(space(), rng.gen_range(1..60), metric);
    for dim in 0..DIMS {
        let mut c = DimConstraint { dim, ..Default::default() };
        if rng.gen_bool(0.6) {
            c.sim = Some(rng.gen_range(-2..=22) as f64);
        }
        if rng.gen_bool(0.25) {
            let lo = rng.gen_range(0..=20);
            c.min = Some(lo as f64);
            c.max = Some(rng.gen_range(lo..=20) as f64);
        }
        if c.sim.is_some() || c.min.is_some() {
            q.constraints.push(c);
        }
        if rng.gen_bool(0.2) {
            q.weights.insert(dim, rng.gen_range(0.01..5.0));
        }
    }
    if q.constraints.is_empty() {
        q.constraints.push(DimConstraint::sim(0, 10.0));
    }
    if rng.gen_bool(0.2) {
        q.max_distance = Some(rng.gen_range(0.0..15.0));
    }
    q
}

#[test]
fn random_queries_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let store = random_store(&mut rng, 3000);
    let weights: Vec<f64> = (0..DIMS).map(|i| 1.0 + i as f64).collect();
    let snap = store.snapshot(&space()).unwrap();
    for i in 0..200 {
        let q = random_query(&mut rng);
        let expected = oracle(snap.records(), &q, &weights);
        for exec in [Execution::Sequential, Execution::Parallel] {
            let got: Vec<(u64, f64)> =
                search_with(&q, &store, exec).unwrap().hits.iter().map(|h| (h.record_id, h.distance)).collect();
            assert_eq!(got, expected, "query {i}: {q:?}");
        }
    }
}

#[test]
fn demo_query_is_exact_knn() {
    let store = Store::in_memory();
    let mut rng = ChaCha8Rng::seed_from_u64(1008);
    let ul = populate_demo(&store, 10_001, || rng.gen_range(0..=10)).unwrap();
    let q = demo_query();
    let hits = search_with(&q, &store, Execution::Parallel).unwrap().hits;
    assert_eq!(hits.len(), 1000);
    let snap = store.snapshot(&ul).unwrap();
    let weights = vec![1.0; snap.schema().len()];
    let expected = oracle(snap.records(), &q, &weights);
    let got: Vec<(u64, f64)> = hits.iter().map(|h| (h.record_id, h.distance)).collect();
    assert_eq!(got, expected);
    let worst = hits.last().unwrap().distance;
    let chosen: std::collections::HashSet<u64> = hits.iter().map(|h| h.record_id).collect();
    for r in snap.records().iter().filter(|r| !chosen.contains(&r.id)) {
        let (x, y) = (r.number(SUBV2_START).unwrap(), r.number(SUBV2_START + 1).unwrap());
        assert!(((x - 4.0).powi(2) + (y - 7.0).powi(2)).sqrt() >= worst);
    }
    let seq = search_with(&q, &store, Execution::Sequential).unwrap().hits;
    assert_eq!(seq, hits);
}

#[test]
fn k_beyond_population_returns_all_matches() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let store = random_store(&mut rng, 50);
    let q = SearchQuery::new(space(), 10_000, Metric::Manhattan).with(DimConstraint::sim(1, 3.0));
    let snap = store.snapshot(&space()).unwrap();
    let comparable = snap.records().iter().filter(|r| r.is_present(1)).count();
    assert_eq!(search_with(&q, &store, Execution::Sequential).unwrap().hits.len(), comparable);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn metric_axioms(a in point(), b in point(), c in point()) {
        let w = [1.0; DIMS];
        for m in [Metric::Manhattan, Metric::Euclidean] {
            prop_assert_eq!(d(&a, &a, &w, m), 0.0);
            prop_assert_eq!(d(&a, &b, &w, m), d(&b, &a, &w, m));
            prop_assert!(a == b || d(&a, &b, &w, m) > 0.0);
            let (ab, bc, ac) = (d(&a, &b, &w, m), d(&b, &c, &w, m), d(&a, &c, &w, m));
            match m {
                Metric::Manhattan => prop_assert!(ac <= ab + bc),
                Metric::Euclidean => prop_assert!(ac <= ab + bc + 1e-9),
            }
        }
    }
}

proptest! {
    #[test]
    fn weighted_distance_scales(a in point(), b in point(), ws in prop::collection::vec(0.01f64..10.0, DIMS), c in 0.1f64..10.0) {
        let scaled: Vec<f64> = ws.iter().map(|w| w * c * c).collect();
        let e = d(&a, &b, &ws, Metric::Euclidean);
        prop_assert!((d(&a, &b, &scaled, Metric::Euclidean) - c * e).abs() <= 1e-9 * (1.0 + c * e));
        let m = d(&a, &b, &ws, Metric::Manhattan);
        prop_assert!((d(&a, &b, &scaled, Metric::Manhattan) - c * c * m).abs() <= 1e-9 * (1.0 + c * c * m));
    }

    #[test]
    fn adding_a_dimension_never_shrinks_distance(a in point(), b in point(), keep in 1usize..DIMS) {
        let bv: Vec<Option<i64>> = b.iter().map(|x| Some(*x)).collect();
        for m in [Metric::Manhattan, Metric::Euclidean] {
            let fewer = distance(&full(&a)[..keep], &vec![1.0; keep], &dv(&bv), m).unwrap().unwrap();
            let more = distance(&full(&a)[..keep + 1], &vec![1.0; keep + 1], &dv(&bv), m).unwrap().unwrap();
            prop_assert!(more >= fewer);
        }
    }

    #[test]
    fn narrowing_a_range_selects_a_subset(seed in any::<u64>(), lo in 0i64..20, span in 0i64..20, cut in 0i64..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = random_store(&mut rng, 200);
        let wide = SearchQuery::new(space(), 1000, Metric::Euclidean)
            .with(DimConstraint::between(0, lo as f64, (lo + span) as f64));
        let narrow = SearchQuery::new(space(), 1000, Metric::Euclidean)
            .with(DimConstraint::between(0, lo as f64, (lo + span.min(cut)) as f64));
        let ids = |q: &SearchQuery| -> std::collections::BTreeSet<u64> {
            search_with(q, &store, Execution::Sequential).unwrap().hits.iter().map(|h| h.record_id).collect()
        };
        prop_assert!(ids(&narrow).is_subset(&ids(&wide)));
    }
}

#[test]
fn weights_override_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let store = random_store(&mut rng, 100);
    let mut q = SearchQuery::new(space(), 5, Metric::Euclidean)
        .with(DimConstraint::sim(0, 0.0))
        .with(DimConstraint::sim(3, 0.0));
    q.weights = BTreeMap::from([(3, 1.0)]);
    let snap = store.snapshot(&space()).unwrap();
    let expected = oracle(snap.records(), &q, &[1.0, 2.0, 3.0, 4.0]);
    let got: Vec<(u64, f64)> = search_with(&q, &store, Execution::Parallel).unwrap().hits.iter().map(|h| (h.record_id, h.distance)).collect();
    assert_eq!(got, expected);
}
