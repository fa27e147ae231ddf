mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsdb::algebra::{self, Condition};
use wsdb::query::Expr;
use wsdb::{fixtures, CmpOp, Component, Error, FieldId, LocalWorld, RelationSchema, Schema, Value, Wsd};

fn int(i: i64) -> Value {
    Value::Int(i)
}

fn bot() -> Value {
    Value::Bottom
}

fn f(r: &str, t: u32, a: &str) -> FieldId {
    FieldId::new(r, t, a)
}

fn rows(c: &Component) -> Vec<(Vec<Value>, f64)> {
    c.rows.iter().map(|r| (r.values.clone(), r.pr)).collect()
}

/// Worlds of `out` restricted to the input relations plus `p`, against the oracle applying `e` per world.
fn agrees(input: &Wsd, out: &Wsd, p: &str, e: &Expr) {
    let attrs = attrs_of(input.schema());
    let mut names: Vec<&str> = input.schema().relations().iter().map(|r| &*r.name).collect();
    names.push(p);
    let expected = extend(&worlds(input), p, |w| eval(w, &attrs, e).0);
    compare(&expected, &restrict(&worlds(out), &names), EPS).unwrap();
}

fn canonical(wsd: &Wsd) {
    for (_, c) in wsd.components() {
        assert_eq!(&algebra::propagate_bottom(c), c, "component over {:?} is not ⊥-canonical", c.fields);
    }
}

fn certain(name: &str, attrs: &[&str], tuples: &[Vec<Value>]) -> (RelationSchema, Vec<Component>) {
    let mut comps = Vec::new();
    for (i, t) in tuples.iter().enumerate() {
        for (a, v) in attrs.iter().zip(t) {
            comps.push(Component::certain(f(name, i as u32 + 1, a), v.clone()));
        }
    }
    (RelationSchema::new(name, attrs, tuples.len()), comps)
}

#[test]
fn ext_copies_a_column() {
    let a = f("R", 1, "A");
    let c = Component::uniform(vec![a.clone()], vec![vec![int(1)], vec![int(2)]]).unwrap();
    let e = algebra::ext(&c, &a, f("R", 1, "B")).unwrap();
    assert_eq!(rows(&e), vec![(vec![int(1), int(1)], 0.5), (vec![int(2), int(2)], 0.5)]);

    let one = Component::certain(a.clone(), int(9));
    assert_eq!(rows(&algebra::ext(&one, &a, f("R", 1, "B")).unwrap()), vec![(vec![int(9), int(9)], 1.0)]);

    let mut back = e.clone();
    back.project_out(&|x| *x == f("R", 1, "B"));
    assert_eq!(back, c);
    assert!(matches!(algebra::ext(&e, &a, f("R", 1, "B")), Err(Error::Schema(_))));
}

#[test]
fn copy_matches_in_every_world() {
    let running = fixtures::running();
    let out = algebra::copy(&running, "R", "P").unwrap();
    assert_eq!(worlds(&running).len(), 8);
    for w in world_set(&worlds(&out)) {
        assert_eq!(rel(&w, "P"), rel(&w, "R"));
    }
    for t in 1..=3 {
        for a in ["A", "B", "C"] {
            assert!(out.cid_of(&f("P", t, a)).is_some());
        }
    }
}

#[test]
fn copy_of_certain_relation() {
    let (rs, comps) = certain("R", &["A"], &[vec![int(1)], vec![int(2)]]);
    let wsd = Wsd::new(Schema::new(vec![rs]).unwrap(), comps).unwrap();
    let out = algebra::copy(&wsd, "R", "P").unwrap();
    let ws = worlds(&out);
    assert_eq!(ws.len(), 1);
    let w = ws.keys().next().unwrap();
    assert_eq!(rel(w, "P"), rel(w, "R"));
    assert!(matches!(algebra::copy(&out, "R", "P"), Err(Error::Schema(_))));
}

#[test]
fn compose_multiplies_probabilities() {
    let one = Component::certain(f("R", 1, "A"), int(1));
    let two = Component::certain(f("R", 1, "B"), int(2));
    assert_eq!(rows(&algebra::compose(&one, &two).unwrap()), vec![(vec![int(1), int(2)], 1.0)]);

    let wsd = fixtures::census_weighted();
    let c1 = wsd.component_of(&f("R", 1, "S")).unwrap();
    let c3 = wsd.component_of(&f("R", 1, "M")).unwrap();
    let c = algebra::compose(c1, c3).unwrap();
    assert_eq!(c.len(), 6);
    assert!((c.total_pr() - 1.0).abs() < 1e-12);
    let i = c.col(&f("R", 1, "S")).unwrap();
    let j = c.col(&f("R", 2, "S")).unwrap();
    let k = c.col(&f("R", 1, "M")).unwrap();
    let row =
        c.rows.iter().find(|r| r.values[i] == int(185) && r.values[j] == int(186) && r.values[k] == int(1)).unwrap();
    assert!((row.pr - 0.14).abs() < 1e-12);

    let marginal: f64 = worlds(&wsd)
        .iter()
        .filter(|(w, _)| {
            let r = rel(w, "R");
            r.contains(&vec![int(185), "Smith".into(), int(1)]) && r.iter().any(|t| t[0] == int(186))
        })
        .map(|(_, p)| p)
        .sum();
    assert!((marginal - 0.14).abs() < 1e-12);

    let mut comps: Vec<Component> = wsd.components().map(|(_, x)| x.clone()).filter(|x| x != c1 && x != c3).collect();
    comps.push(c);
    let merged = Wsd::new(wsd.schema().clone(), comps).unwrap();
    compare(&worlds(&wsd), &worlds(&merged), EPS).unwrap();

    assert!(matches!(algebra::compose(&one, &one), Err(Error::Schema(_))));
}

#[test]
fn compose_respects_the_size_cap() {
    let big = |a| Component::uniform(vec![f("R", 1, a)], (0..1001).map(|i| vec![int(i)]).collect()).unwrap();
    assert!(matches!(algebra::compose(&big("A"), &big("B")), Err(Error::Resource(_))));
}

#[test]
fn propagate_bottom_marks_whole_tuples() {
    let c = Component::new(
        vec![f("P", 1, "B"), f("P", 1, "C"), f("P", 2, "B")],
        vec![LocalWorld::new(vec![bot(), int(0), int(3)], 0.5), LocalWorld::new(vec![int(2), int(7), int(4)], 0.5)],
    )
    .unwrap();
    let p = algebra::propagate_bottom(&c);
    assert_eq!(p.rows[0].values, vec![bot(), bot(), int(3)]);
    assert_eq!(p.rows[1], c.rows[1]);
    assert_eq!(algebra::propagate_bottom(&p), p);

    let clean = Component::uniform(vec![f("P", 1, "A")], vec![vec![int(1)], vec![int(2)]]).unwrap();
    assert_eq!(algebra::propagate_bottom(&clean), clean);
}

#[test]
fn selection_keeping_everything_equals_copy() {
    let running = fixtures::running();
    let out = algebra::select_const(&running, "R", "A", CmpOp::Ge, &int(0), "P").unwrap();
    for w in world_set(&worlds(&out)) {
        assert_eq!(rel(&w, "P"), rel(&w, "R"));
    }
}

#[test]
fn selection_never_changes_world_probabilities() {
    let running = fixtures::running();
    let out = algebra::select_const(&running, "R", "C", CmpOp::Eq, &int(7), "P").unwrap();
    compare(&worlds(&running), &restrict(&worlds(&out), &["R"]), EPS).unwrap();
    canonical(&out);
}

#[test]
fn ordering_across_types_is_a_type_mismatch() {
    let running = fixtures::running();
    let r = algebra::select_const(&running, "R", "A", CmpOp::Lt, &"x".into(), "P");
    assert!(matches!(r, Err(Error::TypeMismatch(_))));
    let ne = algebra::select_const(&running, "R", "A", CmpOp::Ne, &"x".into(), "P").unwrap();
    for w in world_set(&worlds(&ne)) {
        assert_eq!(rel(&w, "P"), rel(&w, "R"));
    }
}

#[test]
fn attribute_selection_inside_one_component_merges_nothing() {
    let fields = vec![f("R", 1, "B"), f("R", 1, "C"), f("R", 2, "B"), f("R", 2, "C")];
    let mut comps = vec![Component::uniform(
        fields,
        vec![vec![int(1), int(2), int(3), int(3)], vec![int(5), int(4), bot(), bot()]],
    )
    .unwrap()];
    comps.push(Component::certain(f("R", 1, "A"), int(0)));
    comps.push(Component::certain(f("R", 2, "A"), int(0)));
    let wsd = Wsd::new(Schema::new(vec![RelationSchema::new("R", &["A", "B", "C"], 2)]).unwrap(), comps).unwrap();
    let copied = algebra::copy(&wsd, "R", "Q").unwrap();
    let out = algebra::select_attr(&wsd, "R", "B", CmpOp::Lt, "C", "P").unwrap();
    assert_eq!(out.num_components(), copied.num_components());
    agrees(
        &wsd,
        &out,
        "P",
        &Expr::Select(Box::new(Expr::Rel("R".into())), vec![Condition::AttrAttr("B".into(), CmpOp::Lt, "C".into())]),
    );
}

#[test]
fn product_of_certain_relations() {
    let (r, mut comps) = certain("R", &["A"], &[vec![int(1)], vec![int(2)]]);
    let (s, more) = certain("S", &["B"], &[vec!["x".into()], vec!["y".into()]]);
    comps.extend(more);
    let wsd = Wsd::new(Schema::new(vec![r, s]).unwrap(), comps).unwrap();
    let out = algebra::product(&wsd, "R", "S", "T").unwrap();
    let ws = worlds(&out);
    assert_eq!(ws.len(), 1);
    let t = rel(ws.keys().next().unwrap(), "T");
    let want: Rel =
        [(1, "x"), (1, "y"), (2, "x"), (2, "y")].iter().map(|(a, b)| vec![int(*a), Value::from(*b)]).collect();
    assert_eq!(t, want);
    assert_eq!(out.schema().require("T").unwrap().max_card, 4);
    // slot (i, j) is tuple (i - 1) * |S| + j
    let value = |x: FieldId| {
        let c = out.component_of(&x).unwrap();
        c.rows[0].values[c.col(&x).unwrap()].clone()
    };
    assert_eq!(value(f("T", 2, "B")), Value::from("y"));
    assert_eq!(value(f("T", 3, "A")), int(2));
}

#[test]
fn product_needs_disjoint_attributes() {
    let wsd = fixtures::running();
    let two = algebra::copy(&wsd, "R", "S").unwrap();
    assert!(matches!(algebra::product(&two, "R", "S", "T"), Err(Error::Schema(_))));
}

#[test]
fn union_with_itself_is_itself() {
    let running = fixtures::running();
    let out = algebra::union(&running, "R", "R", "T").unwrap();
    assert_eq!(out.schema().require("T").unwrap().max_card, 6);
    for w in world_set(&worlds(&out)) {
        assert_eq!(rel(&w, "T"), rel(&w, "R"));
    }
}

#[test]
fn union_with_certain_relation_keeps_its_tuples() {
    let running = fixtures::running();
    let (s, comps) = certain("S", &["A", "B", "C"], &[vec![int(9), int(9), int(9)]]);
    let mut rels = running.schema().relations().to_vec();
    rels.push(s);
    let mut all: Vec<Component> = running.components().map(|(_, c)| c.clone()).collect();
    all.extend(comps);
    let wsd = Wsd::new(Schema::new(rels).unwrap(), all).unwrap();
    let out = algebra::union(&wsd, "R", "S", "T").unwrap();
    for w in world_set(&worlds(&out)) {
        assert!(rel(&w, "T").contains(&vec![int(9), int(9), int(9)]));
    }
    let bad = algebra::copy(&fixtures::product_inputs(), "R", "Q").unwrap();
    assert!(matches!(algebra::union(&bad, "R", "S", "T"), Err(Error::Schema(_))));
}

#[test]
fn projection_over_all_attributes_is_a_copy() {
    let running = fixtures::running();
    let p = algebra::project(&running, "R", &["A", "B", "C"], "P").unwrap();
    let c = algebra::copy(&running, "R", "P").unwrap();
    compare(&worlds(&c), &worlds(&p), EPS).unwrap();
}

#[test]
fn projection_keeps_tuples_that_vanish_together() {
    let out = algebra::project(&fixtures::exclusive_pair(), "R", &["A"], "P").unwrap();
    assert!(out.cid_of(&f("P", 1, "A")) == out.cid_of(&f("P", 2, "A")));
    canonical(&out);
}

#[test]
fn rename_round_trip() {
    let running = fixtures::running();
    let mut w = algebra::copy(&running, "R", "P").unwrap();
    let sizes = |w: &Wsd| -> Vec<usize> { w.components().map(|(_, c)| c.fields.len()).collect() };
    let before = sizes(&w);
    algebra::rename_in(&mut w, "P", "A", "Z").unwrap();
    assert_eq!(sizes(&w), before);
    assert_eq!(&*w.schema().require("P").unwrap().attrs[0], "Z");
    assert!(matches!(algebra::rename_in(&mut w, "P", "B", "C"), Err(Error::Schema(_))));
    algebra::rename_in(&mut w, "P", "Z", "A").unwrap();
    compare(&worlds(&algebra::copy(&running, "R", "P").unwrap()), &worlds(&w), EPS).unwrap();
}

#[test]
fn difference_with_itself_is_empty() {
    let running = fixtures::running();
    let out = algebra::difference(&running, "R", "R", "P").unwrap();
    for w in world_set(&worlds(&out)) {
        assert!(rel(&w, "P").is_empty());
    }
}

#[test]
fn difference_with_empty_relation_is_a_copy() {
    let running = fixtures::running();
    let mut rels = running.schema().relations().to_vec();
    rels.push(RelationSchema::new("S", &["A", "B", "C"], 1));
    let mut comps: Vec<Component> = running.components().map(|(_, c)| c.clone()).collect();
    comps.push(Component::uniform(vec![f("S", 1, "A"), f("S", 1, "B"), f("S", 1, "C")], vec![vec![bot(); 3]]).unwrap());
    let wsd = Wsd::new(Schema::new(rels).unwrap(), comps).unwrap();
    let out = algebra::difference(&wsd, "R", "S", "P").unwrap();
    for w in world_set(&worlds(&out)) {
        assert_eq!(rel(&w, "P"), rel(&w, "R"));
    }
}

#[test]
fn operators_agree_with_the_per_world_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let r = || Box::new(Expr::Rel("R".into()));
    let s = || Box::new(Expr::Rel("S".into()));
    let t = || Box::new(Expr::Rel("T".into()));
    for _ in 0..300 {
        let wsd = random_wsd(&mut rng);
        let has = |x: &str| wsd.schema().contains(x);
        let op = random_op(&mut rng);
        let c = int(rng.gen_range(0..3));
        let mut cases: Vec<(Wsd, Expr)> = vec![
            (
                algebra::select_const(&wsd, "R", "B", op, &c, "P").unwrap(),
                Expr::Select(r(), vec![Condition::AttrConst("B".into(), op, c.clone())]),
            ),
            (
                algebra::select_attr(&wsd, "R", "A", op, "B", "P").unwrap(),
                Expr::Select(r(), vec![Condition::AttrAttr("A".into(), op, "B".into())]),
            ),
            (algebra::project(&wsd, "R", &["B"], "P").unwrap(), Expr::Project(r(), vec!["B".into()])),
        ];
        if has("S") {
            cases.push((algebra::union(&wsd, "R", "S", "P").unwrap(), Expr::Union(r(), s())));
            cases.push((algebra::difference(&wsd, "R", "S", "P").unwrap(), Expr::Diff(r(), s())));
        }
        if has("T") {
            cases.push((algebra::product(&wsd, "R", "T", "P").unwrap(), Expr::Product(r(), t())));
        }
        for (out, e) in cases {
            agrees(&wsd, &out, "P", &e);
            canonical(&out);
        }
    }
}
