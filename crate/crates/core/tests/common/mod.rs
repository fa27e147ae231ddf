//! Test oracle: explicit world enumeration and per-world relational algebra,
//! written without the library's own enumeration or operators.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use wsdb::algebra::Condition;
use wsdb::chase::{Atom, Dependency, Operand, Var};
use wsdb::query::Expr;
use wsdb::uwsdt::{Cell, Uwsdt};
use wsdb::{CmpOp, Component, FieldId, LocalWorld, RelationSchema, Schema, Value, Wsd};

pub type Rel = BTreeSet<Vec<Value>>;
/// Nonempty relations of one world.
pub type OWorld = BTreeMap<String, Rel>;
pub type Dist = BTreeMap<OWorld, f64>;

pub const EPS: f64 = 1e-9;
const ORACLE_CAP: usize = 200_000;

fn odometer(sizes: &[usize], mut f: impl FnMut(&[usize])) {
    let total: usize = sizes.iter().product();
    assert!(total <= ORACLE_CAP, "oracle asked for {total} worlds");
    if sizes.iter().any(|&s| s == 0) {
        return;
    }
    let mut idx = vec![0; sizes.len()];
    loop {
        f(&idx);
        let mut i = 0;
        loop {
            if i == sizes.len() {
                return;
            }
            idx[i] += 1;
            if idx[i] < sizes[i] {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

fn build_world(
    schema: &Schema,
    tuples: &BTreeMap<String, Vec<u32>>,
    value: impl Fn(&str, u32, &str) -> Value,
) -> OWorld {
    let mut w = OWorld::new();
    for rs in schema.relations() {
        let mut rel = Rel::new();
        for &tid in tuples.get(&*rs.name).map(Vec::as_slice).unwrap_or(&[]) {
            let t: Vec<Value> = rs.attrs.iter().map(|a| value(&rs.name, tid, a)).collect();
            if t.iter().all(|v| *v != Value::Bottom) {
                rel.insert(t);
            }
        }
        if !rel.is_empty() {
            w.insert(rs.name.to_string(), rel);
        }
    }
    w
}

/// Every world of a WSD with its probability, identical worlds summed.
pub fn worlds(wsd: &Wsd) -> Dist {
    let comps: Vec<&Component> = wsd.components().map(|(_, c)| c).collect();
    let tuples: BTreeMap<String, Vec<u32>> =
        wsd.schema().relations().iter().map(|r| (r.name.to_string(), wsd.tids(&r.name).to_vec())).collect();
    let sizes: Vec<usize> = comps.iter().map(|c| c.rows.len()).collect();
    let mut out = Dist::new();
    odometer(&sizes, |idx| {
        let mut vals: HashMap<&FieldId, &Value> = HashMap::new();
        let mut p = 1.0;
        for (c, &k) in comps.iter().zip(idx) {
            p *= c.rows[k].pr;
            for (f, v) in c.fields.iter().zip(&c.rows[k].values) {
                vals.insert(f, v);
            }
        }
        let w = build_world(wsd.schema(), &tuples, |r, t, a| (*vals[&FieldId::new(r, t, a)]).clone());
        *out.entry(w).or_insert(0.0) += p;
    });
    out
}

/// Every world of a UWSDT, read from its template and C/F/W tables.
pub fn uwsdt_worlds(u: &Uwsdt) -> Dist {
    let mut weights: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (cid, lwid, pr) in u.w_rows() {
        let v = weights.entry(cid).or_default();
        assert_eq!(v.len() + 1, lwid as usize, "W rows out of order");
        v.push(pr);
    }
    let mut c: HashMap<FieldId, BTreeMap<u32, Value>> = HashMap::new();
    for (f, lwid, v) in u.c_rows() {
        c.entry(f).or_default().insert(lwid, v);
    }
    let f: HashMap<FieldId, u32> = u.f_rows().into_iter().collect();
    let cids: Vec<u32> = weights.keys().copied().collect();
    let sizes: Vec<usize> = cids.iter().map(|k| weights[k].len()).collect();
    let mut tuples = BTreeMap::new();
    let mut consts: HashMap<FieldId, Value> = HashMap::new();
    for rs in u.schema().relations() {
        let mut tids = Vec::new();
        if let Some(t) = u.template(&rs.name) {
            for (tid, cells) in t.rows() {
                tids.push(*tid);
                for (a, cell) in rs.attrs.iter().zip(cells) {
                    if let Cell::Const(v) = cell {
                        consts.insert(FieldId::new(&rs.name, *tid, a), v.clone());
                    }
                }
            }
        }
        tuples.insert(rs.name.to_string(), tids);
    }
    let mut out = Dist::new();
    odometer(&sizes, |idx| {
        let choice: HashMap<u32, usize> = cids.iter().zip(idx).map(|(k, i)| (*k, *i)).collect();
        let p: f64 = cids.iter().zip(idx).map(|(k, &i)| weights[k][i]).product();
        let w = build_world(u.schema(), &tuples, |r, t, a| {
            let fid = FieldId::new(r, t, a);
            match consts.get(&fid) {
                Some(v) => v.clone(),
                None => c[&fid][&(choice[&f[&fid]] as u32 + 1)].clone(),
            }
        });
        *out.entry(w).or_insert(0.0) += p;
    });
    out
}

pub fn restrict(d: &Dist, names: &[&str]) -> Dist {
    let mut out = Dist::new();
    for (w, p) in d {
        let r: OWorld =
            w.iter().filter(|(k, _)| names.contains(&k.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect();
        *out.entry(r).or_insert(0.0) += p;
    }
    out
}

/// Adds relation `name` computed from each world.
pub fn extend(d: &Dist, name: &str, f: impl Fn(&OWorld) -> Rel) -> Dist {
    let mut out = Dist::new();
    for (w, p) in d {
        let mut w2 = w.clone();
        let r = f(w);
        if !r.is_empty() {
            w2.insert(name.to_string(), r);
        }
        *out.entry(w2).or_insert(0.0) += p;
    }
    out
}

pub fn compare(expected: &Dist, actual: &Dist, eps: f64) -> Result<(), String> {
    let keys: BTreeSet<&OWorld> = expected.keys().chain(actual.keys()).collect();
    for k in keys {
        let (a, b) = (expected.get(k).copied().unwrap_or(0.0), actual.get(k).copied().unwrap_or(0.0));
        if (a - b).abs() > eps {
            return Err(format!("world {k:?}: expected probability {a}, got {b}"));
        }
    }
    Ok(())
}

pub fn world_set(d: &Dist) -> BTreeSet<OWorld> {
    d.iter().filter(|(_, p)| **p > EPS).map(|(w, _)| w.clone()).collect()
}

pub fn rel<'a>(w: &'a OWorld, name: &str) -> Rel {
    w.get(name).cloned().unwrap_or_default()
}

/// `a θ b` on non-⊥ values: integers and strings order among themselves,
/// mixed pairs are only ever unequal.
pub fn holds(op: CmpOp, a: &Value, b: &Value) -> Option<bool> {
    use std::cmp::Ordering::*;
    let o = match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Str(x), Value::Str(y)) => x.cmp(y),
        _ => {
            return match op {
                CmpOp::Eq => Some(false),
                CmpOp::Ne => Some(true),
                _ => None,
            }
        }
    };
    Some(match op {
        CmpOp::Eq => o == Equal,
        CmpOp::Ne => o != Equal,
        CmpOp::Lt => o == Less,
        CmpOp::Le => o != Greater,
        CmpOp::Gt => o == Greater,
        CmpOp::Ge => o != Less,
    })
}

pub fn attrs_of(schema: &Schema) -> HashMap<String, Vec<String>> {
    schema.relations().iter().map(|r| (r.name.to_string(), r.attrs.iter().map(|a| a.to_string()).collect())).collect()
}

fn pos(attrs: &[String], a: &str) -> usize {
    attrs.iter().position(|x| x == a).unwrap_or_else(|| panic!("no attribute {a} in {attrs:?}"))
}

/// Evaluates an expression in one world; returns the relation and its attributes.
pub fn eval(w: &OWorld, schema: &HashMap<String, Vec<String>>, e: &Expr) -> (Rel, Vec<String>) {
    match e {
        Expr::Rel(r) => (rel(w, r), schema[r].clone()),
        Expr::Select(inner, conds) => {
            let (r, attrs) = eval(w, schema, inner);
            let keep = |t: &Vec<Value>| {
                conds.iter().all(|c| match c {
                    Condition::AttrConst(a, op, v) => holds(*op, &t[pos(&attrs, a)], v).expect("comparable"),
                    Condition::AttrAttr(a, op, b) => {
                        holds(*op, &t[pos(&attrs, a)], &t[pos(&attrs, b)]).expect("comparable")
                    }
                })
            };
            (r.into_iter().filter(keep).collect(), attrs)
        }
        Expr::Project(inner, keep) => {
            let (r, attrs) = eval(w, schema, inner);
            let idx: Vec<usize> = keep.iter().map(|a| pos(&attrs, a)).collect();
            (r.iter().map(|t| idx.iter().map(|&i| t[i].clone()).collect()).collect(), keep.clone())
        }
        Expr::Product(l, rr) => {
            let (a, aa) = eval(w, schema, l);
            let (b, ba) = eval(w, schema, rr);
            let mut out = Rel::new();
            for x in &a {
                for y in &b {
                    out.insert(x.iter().chain(y).cloned().collect());
                }
            }
            (out, aa.into_iter().chain(ba).collect())
        }
        Expr::Union(l, rr) => {
            let (a, aa) = eval(w, schema, l);
            let (b, _) = eval(w, schema, rr);
            (a.union(&b).cloned().collect(), aa)
        }
        Expr::Diff(l, rr) => {
            let (a, aa) = eval(w, schema, l);
            let (b, _) = eval(w, schema, rr);
            (a.difference(&b).cloned().collect(), aa)
        }
        Expr::Rename(inner, from, to) => {
            let (r, mut attrs) = eval(w, schema, inner);
            let i = pos(&attrs, from);
            attrs[i] = to.clone();
            (r, attrs)
        }
    }
}

/// Whether a world satisfies a dependency; pairs range over distinct tuples when asked to.
pub fn satisfies(w: &OWorld, schema: &HashMap<String, Vec<String>>, d: &Dependency) -> bool {
    let attrs = &schema[&d.relation];
    let r = rel(w, &d.relation);
    let value = |o: &Operand, t: &Vec<Value>, u: &Vec<Value>| match o {
        Operand::Const(c) => c.clone(),
        Operand::Attr(Var::T, a) => t[pos(attrs, a)].clone(),
        Operand::Attr(Var::U, a) => u[pos(attrs, a)].clone(),
    };
    let atom = |a: &Atom, t: &Vec<Value>, u: &Vec<Value>| {
        holds(a.op, &value(&a.lhs, t, u), &value(&a.rhs, t, u)).expect("comparable")
    };
    let pair_ok = |t: &Vec<Value>, u: &Vec<Value>| {
        if !d.premise.iter().all(|a| atom(a, t, u)) {
            return true;
        }
        d.conclusion.as_ref().map_or(false, |c| atom(c, t, u))
    };
    if d.vars.len() == 1 {
        return r.iter().all(|t| pair_ok(t, t));
    }
    r.iter().all(|t| r.iter().all(|u| (d.distinct && t == u) || pair_ok(t, u)))
}

/// Keeps the worlds satisfying every dependency and rescales; `None` when nothing is left.
pub fn filter_renormalize(d: &Dist, schema: &HashMap<String, Vec<String>>, deps: &[Dependency]) -> Option<Dist> {
    let kept: Dist =
        d.iter().filter(|(w, _)| deps.iter().all(|x| satisfies(w, schema, x))).map(|(w, p)| (w.clone(), *p)).collect();
    let total: f64 = kept.values().sum();
    if total <= 1e-12 {
        return None;
    }
    Some(kept.into_iter().map(|(w, p)| (w, p / total)).collect())
}

/// Relations of the random databases: `R(A, B)`, `S(A, B)` and `T(C)`.
pub const RANDOM_RELATIONS: [(&str, &[&str]); 3] = [("R", &["A", "B"]), ("S", &["A", "B"]), ("T", &["C"])];

/// A random WSD with up to 3 relations of up to 3 tuples, up to 4 components
/// and up to 3 local worlds per component. Values are 0..3; some are ⊥.
pub fn random_wsd(rng: &mut impl Rng) -> Wsd {
    let n_rel = rng.gen_range(1..=3);
    let mut schema = Vec::new();
    let mut fields = Vec::new();
    for (name, attrs) in &RANDOM_RELATIONS[..n_rel] {
        let n = rng.gen_range(0..=3);
        schema.push(RelationSchema::new(name, attrs, n));
        for t in 1..=n as u32 {
            for a in attrs.iter() {
                fields.push(FieldId::new(name, t, a));
            }
        }
    }
    if fields.is_empty() {
        schema[0] = RelationSchema::new("R", &["A", "B"], 1);
        fields = vec![FieldId::new("R", 1, "A"), FieldId::new("R", 1, "B")];
    }
    let k = rng.gen_range(1..=4);
    let mut groups: Vec<Vec<FieldId>> = vec![Vec::new(); k];
    for f in fields {
        groups[rng.gen_range(0..k)].push(f);
    }
    let comps = groups
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let rows = rng.gen_range(1..=3);
            let weights: Vec<f64> = (0..rows).map(|_| rng.gen_range(1..=5) as f64).collect();
            let total: f64 = weights.iter().sum();
            let rows = weights
                .iter()
                .map(|w| {
                    let vals = g
                        .iter()
                        .map(|_| if rng.gen_bool(0.15) { Value::Bottom } else { Value::Int(rng.gen_range(0..3)) })
                        .collect();
                    LocalWorld::new(vals, w / total)
                })
                .collect();
            Component::new(g, rows).expect("valid component")
        })
        .collect();
    Wsd::new(Schema::new(schema).unwrap(), comps).expect("valid WSD")
}

pub fn random_op(rng: &mut impl Rng) -> CmpOp {
    CmpOp::ALL[rng.gen_range(0..6)]
}

/// A random dependency over `R(A, B)`.
pub fn random_dependency(rng: &mut impl Rng) -> String {
    let c = |rng: &mut dyn rand::RngCore| rng.gen_range(0..3);
    let op = |rng: &mut dyn rand::RngCore| CmpOp::ALL[rng.gen_range(0..6)].symbol();
    let attr = |rng: &mut dyn rand::RngCore| if rng.gen_bool(0.5) { "A" } else { "B" };
    match rng.gen_range(0..5) {
        0 => {
            format!("FORALL t IN R : t.{} {} {} -> t.{} {} {}", attr(rng), op(rng), c(rng), attr(rng), op(rng), c(rng))
        }
        1 => format!("FORALL t IN R : t.A {} t.B -> FALSE", op(rng)),
        2 => "FORALL t, u IN R (t != u) : t.A = u.A -> t.B = u.B".to_string(),
        3 => format!("FORALL t, u IN R (t != u) : t.{} = u.{} -> FALSE", attr(rng), attr(rng)),
        _ => format!("FORALL t, u IN R : t.A {} u.B AND t.B = {} -> u.A != {}", op(rng), c(rng), c(rng)),
    }
}
