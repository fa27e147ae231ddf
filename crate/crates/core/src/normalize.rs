//! Rewrites that shrink a WSD without changing the world-set it represents.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{Component, FieldId, LocalWorld, Wsd, PROB_EPS};
use crate::value::Value;

/// Drops tuples that are ⊥ in every local world of some field's component.
pub fn remove_invalid_tuples(wsd: &Wsd) -> Wsd {
    let mut out = wsd.clone();
    remove_invalid_tuples_in(&mut out);
    out
}

pub fn remove_invalid_tuples_in(wsd: &mut Wsd) -> bool {
    let mut dead: BTreeMap<String, BTreeSet<u32>> = BTreeMap::new();
    for (_, c) in wsd.components() {
        for (i, f) in c.fields.iter().enumerate() {
            if c.column(i).all(Value::is_bottom) {
                dead.entry(f.rel.to_string()).or_default().insert(f.tid);
            }
        }
    }
    let changed = !dead.is_empty();
    for (rel, tids) in dead {
        wsd.remove_tuples(&rel, &tids);
    }
    changed
}

/// Merges identical local worlds by summing their probabilities.
pub fn compress(wsd: &Wsd) -> Wsd {
    let mut out = wsd.clone();
    compress_in(&mut out);
    out
}

pub fn compress_in(wsd: &mut Wsd) -> bool {
    let cids: Vec<_> = wsd.components().map(|(k, _)| k).collect();
    let mut changed = false;
    for cid in cids {
        let c = wsd.component_mut(cid);
        let before = c.len();
        *c = compress_component(c);
        changed |= c.len() != before;
    }
    changed
}

pub fn compress_component(c: &Component) -> Component {
    c.marginal(&c.fields)
}

/// Splits every component into its finest factorization.
pub fn decompose(wsd: &Wsd) -> Wsd {
    let mut out = wsd.clone();
    decompose_in(&mut out);
    out
}

pub fn decompose_in(wsd: &mut Wsd) -> bool {
    let cids: Vec<_> = wsd.components().filter(|(_, c)| c.fields.len() > 1).map(|(k, _)| k).collect();
    let mut changed = false;
    for cid in cids {
        let parts = factorize(wsd.component(cid).unwrap());
        if parts.len() > 1 {
            wsd.take(cid);
            for p in parts {
                wsd.insert(p).expect("factor fields are disjoint");
            }
            changed = true;
        }
    }
    changed
}

/// remove_invalid_tuples, compress and decompose until nothing changes.
pub fn normalize(wsd: &Wsd) -> Wsd {
    let mut out = wsd.clone();
    loop {
        let a = remove_invalid_tuples_in(&mut out);
        let b = compress_in(&mut out);
        let c = decompose_in(&mut out);
        if !(a || b || c) {
            return out;
        }
    }
}

/// The finest partition of the component's fields into independent factors.
///
/// Fields are added one at a time. For a new field the smallest set of
/// existing blocks it must join is found by dropping blocks greedily: the
/// groupings that factor are exactly the supersets of the smallest one.
pub fn factorize(c: &Component) -> Vec<Component> {
    let c = compress_component(c);
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for g in 0..c.fields.len() {
        let mut chosen: Vec<usize> = (0..blocks.len()).collect();
        let mut k = 0;
        while k < chosen.len() {
            let trial: Vec<usize> = chosen.iter().copied().filter(|&b| b != chosen[k]).collect();
            if splits(&c, &blocks, &trial, g) {
                chosen = trial;
            } else {
                k += 1;
            }
        }
        let mut merged = vec![g];
        for &b in &chosen {
            merged.extend(&blocks[b]);
        }
        merged.sort_unstable();
        let mut next: Vec<Vec<usize>> =
            blocks.into_iter().enumerate().filter(|(i, _)| !chosen.contains(i)).map(|(_, b)| b).collect();
        next.push(merged);
        blocks = next;
    }
    if blocks.len() == 1 {
        return vec![c];
    }
    blocks.sort();
    let parts: Vec<Component> =
        blocks.iter().map(|b| c.marginal(&b.iter().map(|&i| c.fields[i].clone()).collect::<Vec<_>>())).collect();
    if reconstructs(&c, &parts) {
        parts
    } else {
        vec![c]
    }
}

/// Does the joint distribution over (chosen blocks + g) ∪ (other blocks) factor into the two sides?
fn splits(c: &Component, blocks: &[Vec<usize>], chosen: &[usize], g: usize) -> bool {
    let mut left = vec![g];
    let mut right = Vec::new();
    for (i, b) in blocks.iter().enumerate() {
        if chosen.contains(&i) {
            left.extend(b);
        } else {
            right.extend(b);
        }
    }
    if right.is_empty() {
        return true;
    }
    independent(c, &left, &right)
}

/// Whether the columns `left` and `right` are independent in `c` (within tolerance).
pub(crate) fn independent(c: &Component, left: &[usize], right: &[usize]) -> bool {
    let key = |r: &LocalWorld, cols: &[usize]| -> Vec<Value> { cols.iter().map(|&i| r.values[i].clone()).collect() };
    let mut joint: BTreeMap<(Vec<Value>, Vec<Value>), f64> = BTreeMap::new();
    let mut ml: BTreeMap<Vec<Value>, f64> = BTreeMap::new();
    let mut mr: BTreeMap<Vec<Value>, f64> = BTreeMap::new();
    for r in &c.rows {
        let (a, b) = (key(r, left), key(r, right));
        *ml.entry(a.clone()).or_default() += r.pr;
        *mr.entry(b.clone()).or_default() += r.pr;
        *joint.entry((a, b)).or_default() += r.pr;
    }
    if joint.len() != ml.len() * mr.len() {
        return false;
    }
    joint.iter().all(|((a, b), p)| (p - ml[a] * mr[b]).abs() <= PROB_EPS)
}

fn reconstructs(c: &Component, parts: &[Component]) -> bool {
    let mut acc = parts[0].clone();
    for p in &parts[1..] {
        match acc.compose(p) {
            Ok(x) => acc = x,
            Err(_) => return false,
        }
    }
    let acc = acc.reorder(&c.fields);
    if acc.len() != c.len() {
        return false;
    }
    let want: BTreeMap<&[Value], f64> = c.rows.iter().map(|r| (r.values.as_slice(), r.pr)).collect();
    acc.rows.iter().all(|r| want.get(r.values.as_slice()).is_some_and(|p| (p - r.pr).abs() <= PROB_EPS))
}

/// Exhaustive check that no binary split of the component factors. Exponential in the field count.
pub fn is_maximal_component(c: &Component) -> bool {
    let n = c.fields.len();
    if n < 2 {
        return true;
    }
    let c = compress_component(c);
    // subsets containing field 0 and not everything
    for mask in 0u64..(1u64 << (n - 1)) {
        let left: Vec<usize> = std::iter::once(0).chain((1..n).filter(|i| mask & (1 << (i - 1)) != 0)).collect();
        if left.len() == n {
            continue;
        }
        let right: Vec<usize> = (0..n).filter(|i| !left.contains(i)).collect();
        if independent(&c, &left, &right) {
            return false;
        }
    }
    true
}

/// Field partition of a WSD restricted to the fields of one relation.
pub fn relation_partition(wsd: &Wsd, rel: &str) -> BTreeSet<BTreeSet<FieldId>> {
    wsd.components()
        .map(|(_, c)| c.fields.iter().filter(|f| &*f.rel == rel).cloned().collect::<BTreeSet<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}
