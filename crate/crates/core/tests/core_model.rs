mod common;

use std::collections::BTreeSet;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wsdb::chase::{chase, parse_dependency};
use wsdb::{
    aggregate, enumerate_worlds, extract_world, fixtures, from_orset_relation, from_tuple_independent, inline_worlds,
    Component, Error, FieldId, LocalWorld, OrSet, RelationSchema, Schema, TiRelation, Value, World, Wsd,
};

fn int(i: i64) -> Value {
    Value::Int(i)
}

fn schema_r(max: usize) -> Schema {
    Schema::new(vec![RelationSchema::new("R", &["A", "B"], max)]).unwrap()
}

fn world_of(tuples: &[Vec<Value>]) -> World {
    let mut w = World::default();
    if !tuples.is_empty() {
        w.relations.insert("R".into(), tuples.iter().cloned().collect());
    }
    w
}

#[test]
fn cleaned_census_worlds_inline_to_24_rows() {
    let wsd = fixtures::census_orset();
    let key = parse_dependency(fixtures::CENSUS_KEY).unwrap();
    let worlds: Vec<(World, f64)> =
        aggregate(enumerate_worlds(&chase(&wsd, &[key]).unwrap(), 1000).unwrap()).into_iter().collect();
    assert_eq!(worlds.len(), 24);
    let inlined = inline_worlds(&worlds, wsd.schema()).unwrap();
    let cols: Vec<String> = inlined.columns.iter().map(|f| f.to_string()).collect();
    assert_eq!(cols, ["R.t1.S", "R.t1.N", "R.t1.M", "R.t2.S", "R.t2.N", "R.t2.M"]);
    assert_eq!(inlined.rows.len(), 24);
    for (i, (row, _)) in inlined.rows.iter().enumerate() {
        assert!(row[..3] <= row[3..], "tuples of row {i} are not sorted");
        assert_eq!(inlined.world(i), worlds[i].0);
    }
}

#[test]
fn padding_fills_missing_tuples_with_bottom() {
    let w = world_of(&[vec![int(1), int(2)], vec![int(3), int(4)]]);
    let inlined = inline_worlds(&[(w, 1.0)], &schema_r(3)).unwrap();
    assert_eq!(inlined.rows[0].0, vec![int(1), int(2), int(3), int(4), Value::Bottom, Value::Bottom]);

    let inlined = inline_worlds(&[(World::default(), 1.0)], &schema_r(1)).unwrap();
    assert_eq!(inlined.rows[0].0, vec![Value::Bottom, Value::Bottom]);
}

#[test]
fn too_many_tuples_is_a_cardinality_error() {
    let w = world_of(&[vec![int(1), int(2)], vec![int(3), int(4)]]);
    assert!(matches!(inline_worlds(&[(w, 1.0)], &schema_r(1)), Err(Error::Validation(_))));
}

#[test]
fn extract_first_census_row() {
    let schema = Schema::new(vec![RelationSchema::new("R", &["S", "N", "M"], 2)]).unwrap();
    let row = vec![int(185), "Smith".into(), int(1), int(186), "Brown".into(), int(1)];
    let w = extract_world(&row, &schema).unwrap();
    let want: BTreeSet<Vec<Value>> =
        [vec![int(185), "Smith".into(), int(1)], vec![int(186), "Brown".into(), int(1)]].into_iter().collect();
    assert_eq!(w.relation("R"), &want);
}

#[test]
fn extract_all_bottom_row_is_empty() {
    let w = extract_world(&vec![Value::Bottom; 4], &schema_r(2)).unwrap();
    assert!(w.relations.is_empty());
}

#[test]
fn extract_collapses_duplicate_slices() {
    let w = extract_world(&[int(1), int(2), int(1), int(2), int(5), Value::Bottom], &schema_r(3)).unwrap();
    assert_eq!(w.relation("R").len(), 1);
}

proptest! {
    #[test]
    fn inline_then_extract_is_identity(tuples in prop::collection::btree_set((0i64..4, 0i64..4), 0..=4)) {
        let tuples: Vec<Vec<Value>> = tuples.into_iter().map(|(a, b)| vec![int(a), int(b)]).collect();
        let w = world_of(&tuples);
        let schema = schema_r(4);
        let inlined = inline_worlds(&[(w.clone(), 1.0)], &schema).unwrap();
        prop_assert_eq!(extract_world(&inlined.rows[0].0, &schema).unwrap(), w);
    }
}

#[test]
fn weighted_census_world_probability() {
    let dist = aggregate(enumerate_worlds(&fixtures::census_weighted(), 1000).unwrap());
    let want = world_of(&[]);
    let mut want = want;
    want.relations.insert(
        "R".into(),
        [vec![int(185), "Smith".into(), int(2)], vec![int(186), "Brown".into(), int(2)]].into_iter().collect(),
    );
    assert!((dist[&want] - 0.015).abs() < 1e-12);
}

#[test]
fn single_component_rows_are_the_worlds() {
    let f = |t| FieldId::new("R", t, "A");
    let schema = Schema::new(vec![RelationSchema::new("R", &["A"], 2)]).unwrap();
    let c = Component::new(
        vec![f(1), f(2)],
        vec![LocalWorld::new(vec![int(1), int(2)], 0.25), LocalWorld::new(vec![int(3), Value::Bottom], 0.75)],
    )
    .unwrap();
    let wsd = Wsd::new(schema, vec![c]).unwrap();
    let ws = enumerate_worlds(&wsd, 10).unwrap();
    assert_eq!(ws.len(), 2);
    assert_eq!(ws[0].0.relation("R").len(), 2);
    assert_eq!(ws[1].0.relation("R").iter().next().unwrap(), &vec![int(3)]);
    assert_eq!(ws[1].1, 0.75);
}

#[test]
fn enumeration_cap_is_enforced() {
    assert!(matches!(enumerate_worlds(&fixtures::census_orset(), 31), Err(Error::Resource(_))));
}

#[test]
fn tuple_independent_worlds() {
    let wsd = fixtures::tuple_independent().unwrap();
    assert_eq!(wsd.num_components(), 3);
    let mut ps: Vec<f64> = aggregate(enumerate_worlds(&wsd, 100).unwrap()).into_values().collect();
    ps.sort_by(f64::total_cmp);
    let mut want = [0.24, 0.24, 0.06, 0.06, 0.16, 0.16, 0.04, 0.04];
    want.sort_by(f64::total_cmp);
    for (p, q) in ps.iter().zip(want) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn certain_tuple_gets_one_row() {
    let wsd = from_tuple_independent(&[TiRelation {
        name: "R".into(),
        attrs: vec!["A".into()],
        tuples: vec![(vec![int(1)], 1.0)],
    }])
    .unwrap();
    let (_, c) = wsd.components().next().unwrap();
    assert_eq!(c.rows, vec![LocalWorld::new(vec![int(1)], 1.0)]);
}

#[test]
fn confidence_outside_unit_interval_is_rejected() {
    for c in [0.0, -0.5, 1.5] {
        let r = TiRelation { name: "R".into(), attrs: vec!["A".into()], tuples: vec![(vec![int(1)], c)] };
        assert!(matches!(from_tuple_independent(&[r]), Err(Error::Validation(_))), "{c}");
    }
}

#[test]
fn tuple_independent_matches_subset_products() {
    let cs = [0.3, 0.9, 0.55, 1.0];
    let r = TiRelation {
        name: "R".into(),
        attrs: vec!["A".into()],
        tuples: cs.iter().enumerate().map(|(i, &c)| (vec![int(i as i64)], c)).collect(),
    };
    let dist = aggregate(enumerate_worlds(&from_tuple_independent(&[r]).unwrap(), 100).unwrap());
    let mut total = 0.0;
    for mask in 0u32..16 {
        let p: f64 = cs.iter().enumerate().map(|(i, c)| if mask >> i & 1 == 1 { *c } else { 1.0 - c }).product();
        let tuples: Vec<Vec<Value>> = (0..4).filter(|i| mask >> i & 1 == 1).map(|i| vec![int(i)]).collect();
        let mut w = World::default();
        if !tuples.is_empty() {
            w.relations.insert("R".into(), tuples.into_iter().collect());
        }
        let got = dist.get(&w).copied().unwrap_or(0.0);
        assert!((got - p).abs() < 1e-12, "subset {mask:04b}: {got} vs {p}");
        total += got;
    }
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn census_orsets_give_six_components_and_uniform_worlds() {
    let wsd = fixtures::census_orset();
    assert_eq!(wsd.num_components(), 6);
    let dist = aggregate(enumerate_worlds(&wsd, 100).unwrap());
    assert_eq!(dist.len(), 32);
    assert!(dist.values().all(|p| (p - 1.0 / 32.0).abs() < 1e-12));
}

#[test]
fn orset_relation_without_choices_has_one_world() {
    let wsd = from_orset_relation(
        "R",
        &["A", "B"],
        &[vec![OrSet::certain(int(1)), OrSet::certain(int(2))], vec![OrSet::certain(int(3)), OrSet::certain(int(4))]],
    )
    .unwrap();
    assert!(wsd.components().all(|(_, c)| c.rows.len() == 1));
    assert_eq!(enumerate_worlds(&wsd, 10).unwrap().len(), 1);
}

#[test]
fn orset_weights_must_sum_to_one() {
    let bad = OrSet::weighted(vec![(int(1), 0.5), (int(2), 0.4)]);
    assert!(matches!(from_orset_relation("R", &["A"], &[vec![bad]]), Err(Error::Validation(_))));
}

#[test]
fn components_must_sum_to_one() {
    let f = FieldId::new("R", 1, "A");
    let rows = vec![LocalWorld::new(vec![int(1)], 0.5), LocalWorld::new(vec![int(2)], 0.6)];
    assert!(matches!(Component::new(vec![f.clone()], rows), Err(Error::Validation(_))));
    let rows = vec![LocalWorld::new(vec![int(1)], 1.0), LocalWorld::new(vec![int(2)], 0.0)];
    assert_eq!(Component::new(vec![f], rows).unwrap().rows.len(), 1);
}

#[test]
fn every_field_needs_exactly_one_component() {
    let f = |t| FieldId::new("R", t, "A");
    let schema = Schema::new(vec![RelationSchema::new("R", &["A"], 2)]).unwrap();
    let partial = Schema::new(vec![RelationSchema::new("R", &["A", "B"], 2)]).unwrap();
    assert!(Wsd::new(partial, vec![Component::certain(f(1), int(1))]).is_err());
    let twice =
        vec![Component::certain(f(1), int(1)), Component::certain(f(1), int(2)), Component::certain(f(2), int(2))];
    assert!(Wsd::new(schema, twice).is_err());
}

#[test]
fn random_decompositions_have_unit_mass_and_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let wsd = random_wsd(&mut rng);
        let ws = enumerate_worlds(&wsd, 100_000).unwrap();
        let total: f64 = ws.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let agg: Vec<(World, f64)> = aggregate(ws).into_iter().collect();
        let inlined = inline_worlds(&agg, wsd.schema()).unwrap();
        assert_eq!(aggregate(inlined.worlds()), agg.into_iter().collect());
        let library = aggregate(enumerate_worlds(&wsd, 100_000).unwrap());
        let oracle = worlds(&wsd);
        assert_eq!(library.len(), oracle.len());
    }
}
