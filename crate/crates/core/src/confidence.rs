//! Tuple confidence and possible tuples, computed on the decomposition.
//!
//! Two routes give the same number: composing the components that can
//! produce the tuple and summing matching local worlds, or collecting
//! world-set descriptors and computing the probability of their union.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};

use crate::decomposition::{compose_all, for_each_combination, tuple_cells, CellRef, Decomposition, Weights};
use crate::error::{Error, Result};
use crate::model::{Cid, Component, FieldId, Lwid, Tuple};
use crate::value::Value;

/// Descriptors mentioning more distinct components than this are refused.
pub const DESCRIPTOR_CID_CAP: usize = 20;

/// A set of worlds given by fixing local worlds of some components.
///
/// The empty descriptor stands for all worlds.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WsDescriptor(BTreeMap<Cid, Lwid>);

impl WsDescriptor {
    /// Fails if a component is assigned two different local worlds.
    pub fn new(pairs: impl IntoIterator<Item = (Cid, Lwid)>) -> Result<Self> {
        let mut m = BTreeMap::new();
        for (c, l) in pairs {
            if let Some(old) = m.insert(c, l) {
                if old != l {
                    return Err(Error::validation(format!("descriptor fixes component {c} twice")));
                }
            }
        }
        Ok(WsDescriptor(m))
    }

    pub fn choices(&self) -> &BTreeMap<Cid, Lwid> {
        &self.0
    }
}

fn weight(w: &(impl Weights + ?Sized), cid: Cid, lwid: Lwid) -> Result<f64> {
    let ws = w.weights(cid).ok_or_else(|| Error::validation(format!("unknown component {cid}")))?;
    lwid.checked_sub(1)
        .and_then(|i| ws.get(i as usize).copied())
        .ok_or_else(|| Error::validation(format!("component {cid} has no local world {lwid}")))
}

/// Probability of the worlds a single descriptor covers.
pub fn descriptor_prob(d: &WsDescriptor, w: &(impl Weights + ?Sized)) -> Result<f64> {
    d.0.iter().try_fold(1.0, |acc, (&c, &l)| Ok(acc * weight(w, c, l)?))
}

/// Probability of the union of the descriptors, computed exactly.
pub fn descriptor_set_prob(ds: &[WsDescriptor], w: &(impl Weights + ?Sized)) -> Result<f64> {
    let cids: BTreeSet<Cid> = ds.iter().flat_map(|d| d.0.keys().copied()).collect();
    if cids.len() > DESCRIPTOR_CID_CAP {
        return Err(Error::resource(format!("descriptors mention {} components", cids.len())));
    }
    let mut probs: BTreeMap<Cid, Cow<'_, [f64]>> = BTreeMap::new();
    for c in cids {
        probs.insert(c, w.weights(c).ok_or_else(|| Error::validation(format!("unknown component {c}")))?);
    }
    for d in ds {
        for (&c, &l) in &d.0 {
            weight(w, c, l)?;
        }
    }
    let set: BTreeSet<WsDescriptor> = ds.iter().cloned().collect();
    Ok(union_prob(set.into_iter().collect(), &probs))
}

fn union_prob(ds: Vec<WsDescriptor>, probs: &BTreeMap<Cid, Cow<'_, [f64]>>) -> f64 {
    if ds.is_empty() {
        return 0.0;
    }
    if ds.iter().any(|d| d.0.is_empty()) {
        return 1.0;
    }
    if ds.len() == 1 {
        return ds[0].0.iter().map(|(c, l)| probs[c][*l as usize - 1]).product();
    }
    let groups = independent_groups(&ds);
    if groups.len() > 1 {
        let miss: f64 = groups.into_iter().map(|g| 1.0 - union_prob(g, probs)).product();
        return 1.0 - miss;
    }
    let mut freq: BTreeMap<Cid, usize> = BTreeMap::new();
    for d in &ds {
        for c in d.0.keys() {
            *freq.entry(*c).or_default() += 1;
        }
    }
    let pivot = freq.iter().max_by_key(|(c, n)| (**n, std::cmp::Reverse(**c))).map(|(c, _)| *c).unwrap();
    let mentioned: BTreeSet<Lwid> = ds.iter().filter_map(|d| d.0.get(&pivot).copied()).collect();
    let p = &probs[&pivot];
    let mut total = 0.0;
    let mut rest = 1.0;
    for &l in &mentioned {
        let pl = p[l as usize - 1];
        rest -= pl;
        let cond: Vec<WsDescriptor> = ds
            .iter()
            .filter(|d| d.0.get(&pivot).map_or(true, |&x| x == l))
            .map(|d| {
                let mut d = d.clone();
                d.0.remove(&pivot);
                d
            })
            .collect();
        total += pl * union_prob(cond, probs);
    }
    if rest > 0.0 {
        let others: Vec<WsDescriptor> = ds.iter().filter(|d| !d.0.contains_key(&pivot)).cloned().collect();
        total += rest * union_prob(others, probs);
    }
    total
}

/// Splits descriptors into groups that share no component.
fn independent_groups(ds: &[WsDescriptor]) -> Vec<Vec<WsDescriptor>> {
    let mut parent: Vec<usize> = (0..ds.len()).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    let mut owner: BTreeMap<Cid, usize> = BTreeMap::new();
    for (i, d) in ds.iter().enumerate() {
        for c in d.0.keys() {
            match owner.get(c) {
                Some(&j) => {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
                None => {
                    owner.insert(*c, i);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<WsDescriptor>> = BTreeMap::new();
    for (i, d) in ds.iter().enumerate() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(d.clone());
    }
    groups.into_values().collect()
}

/// How a tuple id relates to a queried tuple, judging by its constants and possible values.
enum Candidate {
    Never,
    Always,
    Maybe(Vec<CellRef>),
}

fn classify<D: Decomposition + ?Sized>(d: &D, rel: &str, tid: u32, t: &[Value]) -> Result<Candidate> {
    let cells = tuple_cells(d, rel, tid)?;
    let rs = d.schema().require(rel)?;
    let mut certain = true;
    for ((cell, v), a) in cells.iter().zip(t).zip(&rs.attrs) {
        match cell {
            CellRef::Const(c) if c != v => return Ok(Candidate::Never),
            CellRef::Const(_) => {}
            CellRef::Var(cid) => {
                let comp = d.component(*cid).unwrap();
                let i = comp.col(&FieldId::from_parts(&rs.name, tid, a)).unwrap();
                if !comp.column(i).any(|x| x == v) {
                    return Ok(Candidate::Never);
                }
                certain = false;
            }
        }
    }
    Ok(if certain { Candidate::Always } else { Candidate::Maybe(cells) })
}

fn check_tuple<D: Decomposition + ?Sized>(d: &D, rel: &str, t: &[Value]) -> Result<()> {
    let rs = d.schema().require(rel)?;
    if t.len() != rs.arity() {
        return Err(Error::schema(format!("{rel} has arity {}, got a tuple of {}", rs.arity(), t.len())));
    }
    if t.iter().any(Value::is_bottom) {
        return Err(Error::validation("⊥ cannot appear in a queried tuple"));
    }
    Ok(())
}

/// Probability that `t` is in relation `rel`.
pub fn conf<D: Decomposition + ?Sized>(d: &D, rel: &str, t: &[Value]) -> Result<f64> {
    check_tuple(d, rel, t)?;
    let tids = d.tuple_ids(rel).into_owned();
    conf_among(d, rel, t, &tids)
}

/// Like [`conf`], but only tuple ids in `tids` are considered.
fn conf_among<D: Decomposition + ?Sized>(d: &D, rel: &str, t: &[Value], tids: &[u32]) -> Result<f64> {
    let rs = d.schema().require(rel)?.clone();
    let mut cands: Vec<(u32, Vec<CellRef>)> = Vec::new();
    for &tid in tids {
        match classify(d, rel, tid, t)? {
            Candidate::Never => {}
            Candidate::Always => return Ok(1.0),
            Candidate::Maybe(cells) => cands.push((tid, cells)),
        }
    }
    if cands.is_empty() {
        return Ok(0.0);
    }
    let cids: BTreeSet<Cid> = cands
        .iter()
        .flat_map(|(_, cells)| cells.iter().filter_map(|c| if let CellRef::Var(k) = c { Some(*k) } else { None }))
        .collect();
    let comp = compose_all(d, &cids)?;
    // per candidate, (column, expected value) checks for its variable cells
    let checks: Vec<Vec<(usize, &Value)>> = cands
        .iter()
        .map(|(tid, cells)| {
            cells
                .iter()
                .zip(&rs.attrs)
                .zip(t)
                .filter(|((c, _), _)| matches!(c, CellRef::Var(_)))
                .map(|((_, a), v)| (comp.col(&FieldId::from_parts(&rs.name, *tid, a)).unwrap(), v))
                .collect()
        })
        .collect();
    Ok(comp
        .rows
        .iter()
        .filter(|r| checks.iter().any(|ch| ch.iter().all(|(i, v)| &r.values[*i] == *v)))
        .map(|r| r.pr)
        .sum())
}

/// The descriptors of the worlds in which `t` is in `rel`.
pub fn tuple_descriptors<D: Decomposition + ?Sized>(d: &D, rel: &str, t: &[Value]) -> Result<Vec<WsDescriptor>> {
    check_tuple(d, rel, t)?;
    let rs = d.schema().require(rel)?.clone();
    let mut out = Vec::new();
    for &tid in d.tuple_ids(rel).iter() {
        let cells = match classify(d, rel, tid, t)? {
            Candidate::Never => continue,
            Candidate::Always => return Ok(vec![WsDescriptor::default()]),
            Candidate::Maybe(cells) => cells,
        };
        let cids: Vec<Cid> = cells
            .iter()
            .filter_map(|c| if let CellRef::Var(k) = c { Some(*k) } else { None })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let comps: Vec<Cow<'_, Component>> = cids.iter().map(|c| d.component(*c).unwrap()).collect();
        // (component position, column) per variable attribute
        let locs: Vec<Option<(usize, usize)>> = cells
            .iter()
            .zip(&rs.attrs)
            .map(|(c, a)| match c {
                CellRef::Var(k) => {
                    let p = cids.iter().position(|x| x == k).unwrap();
                    Some((p, comps[p].col(&FieldId::from_parts(&rs.name, tid, a)).unwrap()))
                }
                CellRef::Const(_) => None,
            })
            .collect();
        for_each_combination(&comps, |choice| {
            let hit =
                locs.iter().zip(t).all(|(loc, v)| loc.map_or(true, |(p, i)| &comps[p].rows[choice[p]].values[i] == v));
            if hit {
                out.push(WsDescriptor::new(cids.iter().zip(choice).map(|(c, &k)| (*c, k as Lwid + 1)))?);
            }
            Ok(())
        })?;
    }
    Ok(out)
}

/// Confidence through world-set descriptors; agrees with [`conf`].
pub fn conf_via_descriptors<D: Decomposition + ?Sized>(d: &D, rel: &str, t: &[Value]) -> Result<f64> {
    let ds = tuple_descriptors(d, rel, t)?;
    descriptor_set_prob(&ds, d)
}

/// Possible tuples with the tuple ids that can produce them.
fn possible_sources<D: Decomposition + ?Sized>(d: &D, rel: &str) -> Result<BTreeMap<Tuple, Vec<u32>>> {
    let rs = d.schema().require(rel)?.clone();
    let mut out: BTreeMap<Tuple, Vec<u32>> = BTreeMap::new();
    for &tid in d.tuple_ids(rel).iter() {
        let cells = tuple_cells(d, rel, tid)?;
        if cells.iter().any(|c| matches!(c, CellRef::Const(v) if v.is_bottom())) {
            continue;
        }
        let cids: Vec<Cid> = cells
            .iter()
            .filter_map(|c| if let CellRef::Var(k) = c { Some(*k) } else { None })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let comps: Vec<Cow<'_, Component>> = cids.iter().map(|c| d.component(*c).unwrap()).collect();
        let locs: Vec<Result<(usize, usize), Value>> = cells
            .iter()
            .zip(&rs.attrs)
            .map(|(c, a)| match c {
                CellRef::Var(k) => {
                    let p = cids.iter().position(|x| x == k).unwrap();
                    Ok((p, comps[p].col(&FieldId::from_parts(&rs.name, tid, a)).unwrap()))
                }
                CellRef::Const(v) => Err(v.clone()),
            })
            .collect();
        let mut seen = BTreeSet::new();
        for_each_combination(&comps, |choice| {
            let t: Tuple = locs
                .iter()
                .map(|l| match l {
                    Ok((p, i)) => comps[*p].rows[choice[*p]].values[*i].clone(),
                    Err(v) => v.clone(),
                })
                .collect();
            if !t.iter().any(Value::is_bottom) && seen.insert(t.clone()) {
                out.entry(t).or_default().push(tid);
            }
            Ok(())
        })?;
    }
    Ok(out)
}

/// Tuples of `rel` that appear in at least one world.
pub fn possible<D: Decomposition + ?Sized>(d: &D, rel: &str) -> Result<BTreeSet<Tuple>> {
    Ok(possible_sources(d, rel)?.into_keys().collect())
}

/// Possible tuples with their confidence.
pub fn possible_p<D: Decomposition + ?Sized>(d: &D, rel: &str) -> Result<BTreeMap<Tuple, f64>> {
    let mut out = BTreeMap::new();
    for (t, tids) in possible_sources(d, rel)? {
        let p = conf_among(d, rel, &t, &tids)?;
        out.insert(t, p);
    }
    Ok(out)
}
