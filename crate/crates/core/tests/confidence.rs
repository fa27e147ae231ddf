mod common;

use std::collections::BTreeMap;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsdb::algebra;
use wsdb::confidence::{
    conf, conf_via_descriptors, descriptor_prob, descriptor_set_prob, possible, possible_p, tuple_descriptors,
    WsDescriptor,
};
use wsdb::uwsdt::Uwsdt;
use wsdb::{fixtures, Error, FieldId, Value};

fn int(i: i64) -> Value {
    Value::Int(i)
}

fn census_cids(u: &Uwsdt) -> (u32, u32) {
    (u.cid_of(&FieldId::new("R", 1, "S")).unwrap(), u.cid_of(&FieldId::new("R", 1, "M")).unwrap())
}

fn d(pairs: &[(u32, u32)]) -> WsDescriptor {
    WsDescriptor::new(pairs.iter().copied()).unwrap()
}

#[test]
fn census_ssn_confidence() {
    let p = algebra::project(&fixtures::census_weighted(), "R", &["S"], "P").unwrap();
    assert!((conf(&p, "P", &[int(185)]).unwrap() - 0.6).abs() < 1e-12);
    assert_eq!(conf(&p, "P", &[int(999)]).unwrap(), 0.0);
    assert!(conf(&p, "P", &[int(185), int(1)]).is_err());
}

#[test]
fn descriptor_probabilities_on_the_census_store() {
    let u = fixtures::census_uwsdt();
    let (c1, c2) = census_cids(&u);
    assert_eq!(descriptor_prob(&WsDescriptor::default(), &u).unwrap(), 1.0);
    assert_eq!(descriptor_prob(&d(&[(c1, 2)]), &u).unwrap(), 0.4);

    let both = descriptor_prob(&d(&[(c1, 1), (c2, 1)]), &u).unwrap();
    let oracle: f64 = uwsdt_worlds(&u)
        .iter()
        .filter(|(w, _)| {
            let r = rel(w, "R");
            r.contains(&vec![int(185), "Smith".into(), int(1)]) && r.contains(&vec![int(186), "Brown".into(), int(3)])
        })
        .map(|(_, p)| p)
        .sum();
    assert!((both - oracle).abs() < 1e-12);

    assert!(matches!(descriptor_prob(&d(&[(c1, 9)]), &u), Err(Error::Validation(_))));
    assert!(WsDescriptor::new([(c1, 1), (c1, 2)]).is_err());
}

#[test]
fn descriptor_sets() {
    let u = fixtures::census_uwsdt();
    let (c1, c2) = census_cids(&u);
    let one = d(&[(c1, 3)]);
    assert_eq!(descriptor_set_prob(&[one.clone()], &u).unwrap(), descriptor_prob(&one, &u).unwrap());
    let disjoint = descriptor_set_prob(&[d(&[(c1, 1)]), d(&[(c1, 2)])], &u).unwrap();
    assert!((disjoint - 0.6).abs() < 1e-12);

    let union = descriptor_set_prob(&[d(&[(c1, 1)]), d(&[(c2, 1)])], &u).unwrap();
    let oracle: f64 = uwsdt_worlds(&u)
        .iter()
        .filter(|(w, _)| {
            rel(w, "R").iter().any(|t| t[1] == Value::from("Smith") && (t[0] == int(185) || t[2] == int(1)))
        })
        .map(|(_, p)| p)
        .sum();
    assert!((union - (0.2 + 0.7 - 0.2 * 0.7)).abs() < 1e-12);
    assert!((union - oracle).abs() < 1e-12);
}

#[test]
fn descriptor_sets_are_monotone_and_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let weights: BTreeMap<u32, Vec<f64>> = (1..=5)
        .map(|c| {
            let raw: Vec<f64> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(1..=5) as f64).collect();
            let s: f64 = raw.iter().sum();
            (c, raw.iter().map(|x| x / s).collect())
        })
        .collect();
    for _ in 0..200 {
        let mut ds = Vec::new();
        let mut last = 0.0;
        for _ in 0..4 {
            let mut pairs = Vec::new();
            for c in 1..=5u32 {
                if rng.gen_bool(0.4) {
                    pairs.push((c, rng.gen_range(1..=weights[&c].len() as u32)));
                }
            }
            ds.push(d(&pairs));
            let p = descriptor_set_prob(&ds, &weights).unwrap();
            let bound: f64 = ds.iter().map(|x| descriptor_prob(x, &weights).unwrap()).sum::<f64>().min(1.0);
            assert!(p + 1e-12 >= last && p <= bound + 1e-12);
            last = p;
        }
    }
}

#[test]
fn too_many_components_in_descriptors() {
    let weights: BTreeMap<u32, Vec<f64>> = (1..=21).map(|c| (c, vec![0.5, 0.5])).collect();
    let ds: Vec<WsDescriptor> = (1..=21).map(|c| d(&[(c, 1)])).collect();
    assert!(matches!(descriptor_set_prob(&ds, &weights), Err(Error::Resource(_))));
}

#[test]
fn census_possible_tuples() {
    let p = algebra::project(&fixtures::census_weighted(), "R", &["S"], "P").unwrap();
    let got: Vec<Vec<Value>> = possible(&p, "P").unwrap().into_iter().collect();
    assert_eq!(got, [vec![int(185)], vec![int(186)], vec![int(785)]]);
    let pp = possible_p(&p, "P").unwrap();
    for (v, q) in [(185, 0.6), (186, 0.6), (785, 0.8)] {
        assert!((pp[&vec![int(v)]] - q).abs() < 1e-12);
    }
}

#[test]
fn certain_relation_is_its_own_possible_set() {
    let u = Uwsdt::from_wsd(&fixtures::running());
    let p = algebra::project(&fixtures::running(), "R", &["A"], "P").unwrap();
    let t3 = vec![int(6), int(6), int(7)];
    assert_eq!(possible_p(&u, "R").unwrap()[&t3], 1.0);
    assert!((conf(&p, "P", &[int(6)]).unwrap() - 1.0).abs() < 1e-12);

    let sure = wsdb::from_tuple_independent(&[wsdb::TiRelation {
        name: "R".into(),
        attrs: vec!["A".into()],
        tuples: vec![(vec![int(1)], 1.0), (vec![int(2)], 1.0)],
    }])
    .unwrap();
    let pp = possible_p(&sure, "R").unwrap();
    assert_eq!(pp.keys().cloned().collect::<Vec<_>>(), [vec![int(1)], vec![int(2)]]);
    assert!(pp.values().all(|&c| c == 1.0));
}

#[test]
fn every_route_matches_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..300 {
        let wsd = random_wsd(&mut rng);
        let u = Uwsdt::from_wsd(&wsd);
        let oracle = worlds(&wsd);
        let mut sums: BTreeMap<Vec<Value>, f64> = BTreeMap::new();
        for (w, p) in &oracle {
            for t in rel(w, "R") {
                *sums.entry(t).or_insert(0.0) += p;
            }
        }
        assert_eq!(possible(&wsd, "R").unwrap(), sums.keys().cloned().collect());
        assert_eq!(possible(&u, "R").unwrap(), sums.keys().cloned().collect());
        let pp = possible_p(&u, "R").unwrap();
        for (t, p) in &sums {
            assert!(pp[t] > 0.0 && pp[t] <= 1.0 + 1e-12);
            assert!((pp[t] - p).abs() < EPS);
            assert!((conf(&wsd, "R", t).unwrap() - p).abs() < EPS);
            assert!((conf_via_descriptors(&u, "R", t).unwrap() - p).abs() < EPS);
            let ds = tuple_descriptors(&wsd, "R", t).unwrap();
            assert!((descriptor_set_prob(&ds, &wsd).unwrap() - p).abs() < EPS);
        }
        let absent = vec![int(7), int(7)];
        assert_eq!(conf(&wsd, "R", &absent).unwrap(), 0.0);
    }
}
