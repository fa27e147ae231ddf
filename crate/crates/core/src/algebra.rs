//! Relational algebra on WSDs.
//!
//! Every operator extends the decomposition with a fresh result relation and
//! leaves its inputs untouched, so results stay correlated with their inputs.
//! The `*_in` variants work in place; the plain variants clone first.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{Cid, Component, FieldId, Wsd};
use crate::value::{CmpOp, Value};

/// A selection condition.
#[derive(Clone, Debug, PartialEq)]
pub enum Condition {
    AttrConst(String, CmpOp, Value),
    AttrAttr(String, CmpOp, String),
}

pub fn ext(c: &Component, src: &FieldId, dst: FieldId) -> Result<Component> {
    c.ext(src, dst)
}

pub fn compose(c1: &Component, c2: &Component) -> Result<Component> {
    c1.compose(c2)
}

pub fn propagate_bottom(c: &Component) -> Component {
    let mut c = c.clone();
    c.propagate_bottom();
    c
}

macro_rules! pure {
    ($(#[$m:meta])* $name:ident => $inplace:ident ( $($arg:ident : $ty:ty),* )) => {
        $(#[$m])*
        pub fn $name(wsd: &Wsd, $($arg: $ty),*) -> Result<Wsd> {
            let mut w = wsd.clone();
            $inplace(&mut w, $($arg),*)?;
            Ok(w)
        }
    };
}

pure!(
    /// `P := R` in every world.
    copy => copy_in(r: &str, p: &str)
);
pure!(
    /// `P := σ[A θ c](R)`.
    select_const => select_const_in(r: &str, attr: &str, op: CmpOp, c: &Value, p: &str)
);
pure!(
    /// `P := σ[A θ B](R)`.
    select_attr => select_attr_in(r: &str, a: &str, op: CmpOp, b: &str, p: &str)
);
pure!(
    /// `T := R × S`.
    product => product_in(r: &str, s: &str, t: &str)
);
pure!(
    /// `T := R ∪ S`.
    union => union_in(r: &str, s: &str, t: &str)
);
pure!(
    /// `P := π[U](R)`.
    project => project_in(r: &str, attrs: &[&str], p: &str)
);
pure!(
    /// `δ[A → A'](R)`, in place on `R`.
    rename => rename_in(r: &str, from: &str, to: &str)
);
pure!(
    /// `P := R − S`.
    difference => difference_in(r: &str, s: &str, p: &str)
);

/// `P := σ[cond](R)` for either kind of condition.
pub fn select(wsd: &Wsd, r: &str, cond: &Condition, p: &str) -> Result<Wsd> {
    let mut w = wsd.clone();
    select_in(&mut w, r, cond, p)?;
    Ok(w)
}

pub fn select_in(wsd: &mut Wsd, r: &str, cond: &Condition, p: &str) -> Result<()> {
    match cond {
        Condition::AttrConst(a, op, c) => select_const_in(wsd, r, a, *op, c, p),
        Condition::AttrAttr(a, op, b) => select_attr_in(wsd, r, a, *op, b, p),
    }
}

fn fresh(wsd: &Wsd, p: &str) -> Result<()> {
    if wsd.schema().contains(p) {
        return Err(Error::schema(format!("relation {p} already exists")));
    }
    Ok(())
}

pub fn copy_in(wsd: &mut Wsd, r: &str, p: &str) -> Result<()> {
    fresh(wsd, p)?;
    let rs = wsd.schema().require(r)?.clone();
    let tids = wsd.tids(r).to_vec();
    wsd.add_relation(p, rs.attrs.clone(), tids.clone())?;
    let pname: Arc<str> = Arc::from(p);
    for &t in &tids {
        for a in &rs.attrs {
            wsd.ext(&FieldId::from_parts(&rs.name, t, a), FieldId::from_parts(&pname, t, a))?;
        }
    }
    Ok(())
}

/// Marks `P.t.attr` as ⊥ in the rows of its component where `keep` fails, then propagates.
fn mark_failing(wsd: &mut Wsd, f: &FieldId, keep: &dyn Fn(&[Value]) -> Result<bool>) -> Result<()> {
    let cid = wsd.require_cid(f)?;
    let c = wsd.component_mut(cid);
    let i = c.col(f).unwrap();
    let mut changed = false;
    for row in &mut c.rows {
        if !row.values[i].is_bottom() && !keep(&row.values)? {
            row.values[i] = Value::Bottom;
            changed = true;
        }
    }
    if changed {
        c.propagate_bottom();
    }
    Ok(())
}

pub fn select_const_in(wsd: &mut Wsd, r: &str, attr: &str, op: CmpOp, c: &Value, p: &str) -> Result<()> {
    wsd.schema().require(r)?.require_attr(attr)?;
    copy_in(wsd, r, p)?;
    for t in wsd.tids(p).to_vec() {
        let f = FieldId::new(p, t, attr);
        let i = wsd.component_of(&f).unwrap().col(&f).unwrap();
        mark_failing(wsd, &f, &|vals| op.eval(&vals[i], c))?;
    }
    Ok(())
}

pub fn select_attr_in(wsd: &mut Wsd, r: &str, a: &str, op: CmpOp, b: &str, p: &str) -> Result<()> {
    let rs = wsd.schema().require(r)?;
    rs.require_attr(a)?;
    rs.require_attr(b)?;
    copy_in(wsd, r, p)?;
    for t in wsd.tids(p).to_vec() {
        let (fa, fb) = (FieldId::new(p, t, a), FieldId::new(p, t, b));
        let (ca, cb) = (wsd.require_cid(&fa)?, wsd.require_cid(&fb)?);
        let cid = if ca != cb { wsd.merge(&[ca, cb])? } else { ca };
        let comp = wsd.component(cid).unwrap();
        let (i, j) = (comp.col(&fa).unwrap(), comp.col(&fb).unwrap());
        mark_failing(wsd, &fa, &|vals| op.eval(&vals[i], &vals[j]))?;
    }
    Ok(())
}

pub fn product_in(wsd: &mut Wsd, r: &str, s: &str, t: &str) -> Result<()> {
    fresh(wsd, t)?;
    let rs = wsd.schema().require(r)?.clone();
    let ss = wsd.schema().require(s)?.clone();
    if let Some(a) = rs.attrs.iter().find(|a| ss.attrs.contains(a)) {
        return Err(Error::schema(format!("{r} and {s} share attribute {a}")));
    }
    let (rt, st) = (wsd.tids(r).to_vec(), wsd.tids(s).to_vec());
    let n = st.len() as u32;
    let mut attrs = rs.attrs.clone();
    attrs.extend(ss.attrs.iter().cloned());
    let slots = (0..rt.len() as u32 * n).map(|k| k + 1).collect();
    wsd.add_relation(t, attrs, slots)?;
    let tname: Arc<str> = Arc::from(t);
    let mut touched = BTreeSet::new();
    for (i, &ti) in rt.iter().enumerate() {
        for (j, &tj) in st.iter().enumerate() {
            let slot = i as u32 * n + j as u32 + 1;
            for a in &rs.attrs {
                let src = FieldId::from_parts(&rs.name, ti, a);
                touched.insert(wsd.require_cid(&src)?);
                wsd.ext(&src, FieldId::from_parts(&tname, slot, a))?;
            }
            for a in &ss.attrs {
                let src = FieldId::from_parts(&ss.name, tj, a);
                touched.insert(wsd.require_cid(&src)?);
                wsd.ext(&src, FieldId::from_parts(&tname, slot, a))?;
            }
        }
    }
    for cid in touched {
        wsd.component_mut(cid).propagate_bottom();
    }
    Ok(())
}

fn same_attrs(wsd: &Wsd, r: &str, s: &str) -> Result<()> {
    let a: BTreeSet<_> = wsd.schema().require(r)?.attrs.iter().collect();
    let b: BTreeSet<_> = wsd.schema().require(s)?.attrs.iter().collect();
    if a != b {
        return Err(Error::schema(format!("{r} and {s} have different attributes")));
    }
    Ok(())
}

pub fn union_in(wsd: &mut Wsd, r: &str, s: &str, t: &str) -> Result<()> {
    fresh(wsd, t)?;
    same_attrs(wsd, r, s)?;
    let rs = wsd.schema().require(r)?.clone();
    let (rt, st) = (wsd.tids(r).to_vec(), wsd.tids(s).to_vec());
    let slots = (1..=(rt.len() + st.len()) as u32).collect();
    wsd.add_relation(t, rs.attrs.clone(), slots)?;
    let tname: Arc<str> = Arc::from(t);
    let sname: Arc<str> = Arc::from(s);
    let sources = rt.iter().map(|&x| (&rs.name, x)).chain(st.iter().map(|&x| (&sname, x)));
    for (k, (rel, tid)) in sources.enumerate() {
        for a in &rs.attrs {
            wsd.ext(&FieldId::from_parts(rel, tid, a), FieldId::from_parts(&tname, k as u32 + 1, a))?;
        }
    }
    Ok(())
}

pub fn project_in(wsd: &mut Wsd, r: &str, attrs: &[&str], p: &str) -> Result<()> {
    let rs = wsd.schema().require(r)?.clone();
    if attrs.is_empty() {
        return Err(Error::schema("projection needs at least one attribute"));
    }
    let mut seen = BTreeSet::new();
    for a in attrs {
        rs.require_attr(a)?;
        if !seen.insert(*a) {
            return Err(Error::schema(format!("attribute {a} listed twice")));
        }
    }
    copy_in(wsd, r, p)?;
    let kept: Vec<Arc<str>> = attrs.iter().map(|a| Arc::from(*a)).collect();
    let dropped: Vec<Arc<str>> = rs.attrs.iter().filter(|a| !kept.contains(a)).cloned().collect();
    if dropped.is_empty() {
        wsd.set_attrs(p, kept);
        return Ok(());
    }
    let pname: Arc<str> = Arc::from(p);
    let tids = wsd.tids(p).to_vec();
    for &t in &tids {
        loop {
            let kept_cids: Vec<Cid> =
                kept.iter().map(|a| wsd.cid_of(&FieldId::from_parts(&pname, t, a)).unwrap()).collect();
            let target = dropped
                .iter()
                .filter_map(|b| {
                    let f = FieldId::from_parts(&pname, t, b);
                    let cid = wsd.cid_of(&f)?;
                    let c = wsd.component(cid).unwrap();
                    let i = c.col(&f).unwrap();
                    (!kept_cids.contains(&cid) && c.column(i).any(Value::is_bottom)).then_some((c.len(), cid))
                })
                .min();
            let Some((_, cprime)) = target else { break };
            let (_, c) = kept_cids.iter().map(|&k| (wsd.component(k).unwrap().len(), k)).min().unwrap();
            let merged = wsd.merge(&[c, cprime])?;
            let comp = wsd.component_mut(merged);
            let stale: Vec<FieldId> = comp
                .fields
                .iter()
                .filter(|f| f.rel == pname && f.tid <= t && dropped.contains(&f.attr))
                .cloned()
                .collect();
            wsd.drop_fields(&|f| stale.contains(f));
        }
    }
    wsd.drop_fields(&|f| f.rel == pname && dropped.contains(&f.attr));
    wsd.set_attrs(p, kept);
    Ok(())
}

pub fn rename_in(wsd: &mut Wsd, r: &str, from: &str, to: &str) -> Result<()> {
    wsd.rename_relation_attr(r, from, to)
}

pub fn difference_in(wsd: &mut Wsd, r: &str, s: &str, p: &str) -> Result<()> {
    same_attrs(wsd, r, s)?;
    copy_in(wsd, r, p)?;
    let attrs = wsd.schema().require(r)?.attrs.clone();
    let (pname, sname): (Arc<str>, Arc<str>) = (Arc::from(p), Arc::from(s));
    let st = wsd.tids(s).to_vec();
    for t in wsd.tids(p).to_vec() {
        let pf: Vec<FieldId> = attrs.iter().map(|a| FieldId::from_parts(&pname, t, a)).collect();
        for &u in &st {
            let sf: Vec<FieldId> = attrs.iter().map(|a| FieldId::from_parts(&sname, u, a)).collect();
            if pf.iter().zip(&sf).any(|(x, y)| disjoint_values(wsd, x, y)) {
                continue;
            }
            let cids: Vec<Cid> = pf.iter().chain(&sf).map(|f| wsd.cid_of(f).unwrap()).collect();
            let cid = wsd.merge(&cids)?;
            let c = wsd.component_mut(cid);
            let pi: Vec<usize> = pf.iter().map(|f| c.col(f).unwrap()).collect();
            let si: Vec<usize> = sf.iter().map(|f| c.col(f).unwrap()).collect();
            for row in &mut c.rows {
                let mut equal = true;
                for (&x, &y) in pi.iter().zip(&si) {
                    if !CmpOp::Eq.eval(&row.values[x], &row.values[y])? {
                        equal = false;
                        break;
                    }
                }
                if equal {
                    for &x in &pi {
                        row.values[x] = Value::Bottom;
                    }
                }
            }
        }
    }
    Ok(())
}

/// True when two fields can never hold equal non-⊥ values.
fn disjoint_values(wsd: &Wsd, x: &FieldId, y: &FieldId) -> bool {
    let values = |f: &FieldId| -> BTreeSet<Value> {
        let c = wsd.component_of(f).unwrap();
        c.column(c.col(f).unwrap()).filter(|v| !v.is_bottom()).cloned().collect()
    };
    let vx = values(x);
    values(y).is_disjoint(&vx)
}
