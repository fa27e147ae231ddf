//! Small worked databases used by the tests, the guide and the CLI demos.

use crate::error::Result;
use crate::model::{
    from_orset_relation, from_tuple_independent, Component, FieldId, LocalWorld, OrSet, RelationSchema, Schema,
    TiRelation, Wsd,
};
use crate::uwsdt::{Cell, Uwsdt};
use crate::value::Value;

fn int(i: i64) -> Value {
    Value::Int(i)
}

/// Two census records with uncertain social security numbers and marital
/// status: `R(S, N, M)` with 2·2·2·4 = 32 worlds.
pub fn census_orset() -> Wsd {
    from_orset_relation(
        "R",
        &["S", "N", "M"],
        &[
            vec![
                OrSet::uniform(vec![int(185), int(785)]),
                OrSet::certain("Smith".into()),
                OrSet::uniform(vec![int(1), int(2)]),
            ],
            vec![
                OrSet::uniform(vec![int(185), int(186)]),
                OrSet::certain("Brown".into()),
                OrSet::uniform((1..=4).map(int).collect()),
            ],
        ],
    )
    .expect("well-formed fixture")
}

/// Social security numbers must be unique.
pub const CENSUS_KEY: &str = "FORALL t, u IN R (t != u) : t.S = u.S -> FALSE";

/// The cleaned census data with weights on the remaining choices.
pub fn census_weighted() -> Wsd {
    let f = |t, a| FieldId::new("R", t, a);
    let schema = Schema::new(vec![RelationSchema::new("R", &["S", "N", "M"], 2)]).unwrap();
    Wsd::new(
        schema,
        vec![
            Component::new(
                vec![f(1, "S"), f(2, "S")],
                vec![
                    LocalWorld::new(vec![int(185), int(186)], 0.2),
                    LocalWorld::new(vec![int(785), int(185)], 0.4),
                    LocalWorld::new(vec![int(785), int(186)], 0.4),
                ],
            )
            .unwrap(),
            Component::certain(f(1, "N"), "Smith".into()),
            Component::new(
                vec![f(1, "M")],
                vec![LocalWorld::new(vec![int(1)], 0.7), LocalWorld::new(vec![int(2)], 0.3)],
            )
            .unwrap(),
            Component::certain(f(2, "N"), "Brown".into()),
            Component::new(vec![f(2, "M")], (1..=4).map(|m| LocalWorld::new(vec![int(m)], 0.25)).collect()).unwrap(),
        ],
    )
    .unwrap()
}

/// The cleaned census data with Brown's marital status known, as template plus component tables.
pub fn census_uwsdt() -> Uwsdt {
    let schema = Schema::new(vec![RelationSchema::new("R", &["S", "N", "M"], 2)]).unwrap();
    let f = |t, a| FieldId::new("R", t, a);
    Uwsdt::from_tables(
        schema,
        vec![(
            "R".into(),
            vec![
                (1, vec![Cell::Placeholder, Cell::Const("Smith".into()), Cell::Placeholder]),
                (2, vec![Cell::Placeholder, Cell::Const("Brown".into()), Cell::Const(int(3))]),
            ],
        )],
        vec![
            (f(1, "S"), 1, int(185)),
            (f(1, "S"), 2, int(785)),
            (f(1, "S"), 3, int(785)),
            (f(2, "S"), 1, int(186)),
            (f(2, "S"), 2, int(185)),
            (f(2, "S"), 3, int(186)),
            (f(1, "M"), 1, int(1)),
            (f(1, "M"), 2, int(2)),
        ],
        vec![(f(1, "S"), 1), (f(2, "S"), 1), (f(1, "M"), 2)],
        vec![(1, 1, 0.2), (1, 2, 0.4), (1, 3, 0.4), (2, 1, 0.7), (2, 2, 0.3)],
    )
    .expect("well-formed fixture")
}

/// Two tuple-independent relations `S(A, B)` and `T(C, D)`.
pub fn tuple_independent() -> Result<Wsd> {
    from_tuple_independent(&[
        TiRelation {
            name: "S".into(),
            attrs: vec!["A".into(), "B".into()],
            tuples: vec![(vec!["m".into(), int(1)], 0.8), (vec!["n".into(), int(1)], 0.5)],
        },
        TiRelation {
            name: "T".into(),
            attrs: vec!["C".into(), "D".into()],
            tuples: vec![(vec![int(1), "p".into()], 0.6)],
        },
    ])
}

/// `R(A, B, C)` with three tuples, seven components and eight equally likely worlds.
pub fn running() -> Wsd {
    let f = |t, a| FieldId::new("R", t, a);
    let schema = Schema::new(vec![RelationSchema::new("R", &["A", "B", "C"], 3)]).unwrap();
    Wsd::new(
        schema,
        vec![
            Component::uniform(vec![f(1, "A")], vec![vec![int(1)], vec![int(2)]]).unwrap(),
            Component::uniform(
                vec![f(1, "B"), f(1, "C"), f(2, "B")],
                vec![vec![int(1), int(0), int(3)], vec![int(2), int(7), int(4)]],
            )
            .unwrap(),
            Component::uniform(vec![f(2, "A")], vec![vec![int(4)], vec![int(5)]]).unwrap(),
            Component::certain(f(2, "C"), int(0)),
            Component::certain(f(3, "A"), int(6)),
            Component::certain(f(3, "B"), int(6)),
            Component::certain(f(3, "C"), int(7)),
        ],
    )
    .unwrap()
}

/// `R(A, B)` and `S(C, D)`, two tuples each, with correlations inside each relation.
pub fn product_inputs() -> Wsd {
    let r = |t, a| FieldId::new("R", t, a);
    let s = |t, a| FieldId::new("S", t, a);
    let schema =
        Schema::new(vec![RelationSchema::new("R", &["A", "B"], 2), RelationSchema::new("S", &["C", "D"], 2)]).unwrap();
    Wsd::new(
        schema,
        vec![
            Component::uniform(vec![r(1, "A")], vec![vec![int(1)], vec![int(2)]]).unwrap(),
            Component::uniform(vec![r(1, "B"), r(2, "A")], vec![vec![int(3), int(5)], vec![int(4), int(6)]]).unwrap(),
            Component::uniform(vec![r(2, "B")], vec![vec![int(7)], vec![int(8)]]).unwrap(),
            Component::uniform(vec![s(1, "C")], vec![vec!["a".into()], vec!["b".into()]]).unwrap(),
            Component::uniform(
                vec![s(1, "D"), s(2, "C")],
                vec![vec!["c".into(), "e".into()], vec!["d".into(), "f".into()]],
            )
            .unwrap(),
            Component::uniform(vec![s(2, "D")], vec![vec!["g".into()], vec!["h".into()]]).unwrap(),
        ],
    )
    .unwrap()
}

/// `R(A, B)` where exactly one of the two tuples exists.
pub fn exclusive_pair() -> Wsd {
    let f = |t, a| FieldId::new("R", t, a);
    let schema = Schema::new(vec![RelationSchema::new("R", &["A", "B"], 2)]).unwrap();
    Wsd::new(
        schema,
        vec![
            Component::certain(f(1, "A"), "a".into()),
            Component::certain(f(2, "A"), "b".into()),
            Component::uniform(
                vec![f(1, "B"), f(2, "B")],
                vec![vec!["c".into(), Value::Bottom], vec![Value::Bottom, "d".into()]],
            )
            .unwrap(),
        ],
    )
    .unwrap()
}
