//! Or-set CSV input and noise injection.
//!
//! An or-set cell is a plain value `a`, a set of alternatives `{a|b|c}`, or a
//! weighted set `{a:0.2|b:0.8}`.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{from_orset_relation, Cid, Component, FieldId, LocalWorld, Lwid, OrSet, Wsd};
use crate::uwsdt::{Cell, Uwsdt};
use crate::value::Value;

/// Largest or-set produced by [`inject_noise`].
pub const MAX_ORSET: usize = 8;

pub fn parse_orset_cell(text: &str) -> Result<OrSet> {
    let t = text.trim();
    let Some(inner) = t.strip_prefix('{') else {
        if t.ends_with('}') {
            return Err(Error::validation(format!("malformed or-set cell '{text}'")));
        }
        return Ok(OrSet::certain(Value::decode(t)));
    };
    let inner = inner
        .strip_suffix('}')
        .ok_or_else(|| Error::validation(format!("malformed or-set cell '{text}': missing '}}'")))?;
    let parts: Vec<&str> = inner.split('|').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::validation(format!("malformed or-set cell '{text}': empty alternative")));
    }
    let weighted: Vec<Option<(&str, f64)>> = parts
        .iter()
        .map(|p| p.rsplit_once(':').and_then(|(v, w)| w.trim().parse::<f64>().ok().map(|w| (v.trim(), w))))
        .collect();
    match weighted.iter().filter(|w| w.is_some()).count() {
        0 => Ok(OrSet::uniform(parts.iter().map(|p| Value::decode(p)).collect())),
        n if n == parts.len() => {
            let pairs: Vec<(Value, f64)> = weighted.into_iter().flatten().map(|(v, w)| (Value::decode(v), w)).collect();
            check_weights(text, pairs.iter().map(|p| p.1))?;
            Ok(OrSet::weighted(pairs))
        }
        _ => Err(Error::validation(format!("malformed or-set cell '{text}': weights on some alternatives only"))),
    }
}

fn check_weights(cell: &str, ws: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    for w in ws {
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::validation(format!("or-set cell '{cell}': weight {w} is not positive")));
        }
        total += w;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!("or-set cell '{cell}': weights sum to {total}")));
    }
    Ok(())
}

fn parse_weight_cell(text: &str) -> Result<Option<Vec<f64>>> {
    let t = text.trim();
    if t.is_empty() {
        return Ok(None);
    }
    let inner = t.strip_prefix('{').and_then(|s| s.strip_suffix('}')).unwrap_or(t);
    let ws = inner
        .split('|')
        .map(|w| w.trim().parse::<f64>().map_err(|_| Error::validation(format!("bad weight cell '{text}'"))))
        .collect::<Result<Vec<f64>>>()?;
    check_weights(text, ws.iter().copied())?;
    Ok(Some(ws))
}

/// Reads an or-set relation named after the file stem.
///
/// The optional weights file has the same header and shape; its cells are
/// empty or list one weight per alternative, e.g. `{0.2|0.8}`.
pub fn load_orset_csv(path: &Path, weights: Option<&Path>) -> Result<Wsd> {
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::validation(format!("{}: cannot name a relation after this file", path.display())))?;
    let (attrs, mut rows) = read_cells(path, parse_orset_cell)?;
    if let Some(wp) = weights {
        let (wattrs, wrows) = read_cells(wp, parse_weight_cell)?;
        if wattrs != attrs || wrows.len() != rows.len() {
            return Err(Error::validation(format!("{} does not match the shape of {}", wp.display(), path.display())));
        }
        for (i, (row, wrow)) in rows.iter_mut().zip(wrows).enumerate() {
            for ((cell, w), a) in row.iter_mut().zip(wrow).zip(&attrs) {
                let Some(w) = w else { continue };
                if w.len() != cell.alternatives.len() {
                    return Err(Error::validation(format!(
                        "row {} attribute {a}: {} weights for {} alternatives",
                        i + 1,
                        w.len(),
                        cell.alternatives.len()
                    )));
                }
                cell.weights = Some(w);
            }
        }
    }
    let attr_refs: Vec<&str> = attrs.iter().map(String::as_str).collect();
    from_orset_relation(name, &attr_refs, &rows)
}

fn read_cells<T>(path: &Path, parse: impl Fn(&str) -> Result<T>) -> Result<(Vec<String>, Vec<Vec<T>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let attrs: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if attrs.is_empty() || attrs.iter().any(String::is_empty) {
        return Err(Error::validation(format!("{}: missing or empty header", path.display())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .map(|c| parse(c).map_err(|e| Error::validation(format!("{} line {line}: {e}", path.display()))))
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    Ok((attrs, rows))
}

/// One noised field: the sorted alternatives, which include the original value.
struct Noised {
    field: FieldId,
    values: Vec<Value>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Draws the noise for certain relations given as `(name, attrs, rows)`.
///
/// Every field gets its own hash of the seed and its position. A field is
/// picked when the hash, read as a number in [0, 1), is below `density`, so
/// the fields picked at a lower density are also picked at any higher one,
/// with the same or-set. Domains are the values observed in the column, and a
/// picked field whose domain has a single value is left alone.
fn draw_noise<'a>(
    relations: impl Iterator<Item = (&'a str, Vec<&'a str>, Vec<(u32, Vec<&'a Value>)>)>,
    density: f64,
    seed: u64,
) -> Result<Vec<Noised>> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::validation(format!("density {density} is outside [0, 1]")));
    }
    let mut out = Vec::new();
    for (r, (rel, attrs, rows)) in relations.enumerate() {
        let domains: Vec<Vec<&Value>> = (0..attrs.len())
            .map(|i| rows.iter().map(|r| r.1[i]).collect::<BTreeSet<_>>().into_iter().collect())
            .collect();
        let index: Vec<HashMap<&Value, usize>> =
            domains.iter().map(|d| d.iter().enumerate().map(|(k, v)| (*v, k)).collect()).collect();
        let rel_hash = splitmix64(seed ^ splitmix64(r as u64));
        for (tid, row) in &rows {
            let tuple_hash = splitmix64(rel_hash ^ u64::from(*tid));
            for (i, v) in row.iter().enumerate() {
                let h = splitmix64(tuple_hash ^ splitmix64(i as u64 + 1));
                if ((h >> 11) as f64) / ((1u64 << 53) as f64) >= density {
                    continue;
                }
                let dom = &domains[i];
                if dom.len() < 2 {
                    continue;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(h);
                let size = rng.gen_range(2..=MAX_ORSET.min(dom.len()));
                let orig = index[i][v];
                let mut values: Vec<Value> = sample(&mut rng, dom.len() - 1, size - 1)
                    .into_iter()
                    .map(|k| dom[if k >= orig { k + 1 } else { k }].clone())
                    .collect();
                values.push((*v).clone());
                values.sort();
                out.push(Noised { field: FieldId::new(rel, *tid, attrs[i]), values });
            }
        }
    }
    Ok(out)
}

/// Replaces random fields of a certain WSD by uniform or-sets.
pub fn inject_noise(wsd: &Wsd, density: f64, seed: u64) -> Result<Wsd> {
    let mut values: HashMap<&FieldId, &Value> = HashMap::new();
    for (_, c) in wsd.components() {
        if c.len() != 1 {
            return Err(Error::validation("noise can only be added to a database with a single world"));
        }
        for (f, v) in c.fields.iter().zip(&c.rows[0].values) {
            values.insert(f, v);
        }
    }
    let schema = wsd.schema();
    let mut relations = Vec::new();
    for rs in schema.relations() {
        let attrs: Vec<&str> = rs.attrs.iter().map(|a| &**a).collect();
        let mut rows = Vec::new();
        for &tid in wsd.tids(&rs.name) {
            let row: Vec<&Value> = attrs.iter().map(|a| values[&FieldId::new(&rs.name, tid, a)]).collect();
            if row.iter().all(|v| !v.is_bottom()) {
                rows.push((tid, row));
            }
        }
        relations.push((&*rs.name, attrs, rows));
    }
    let noise = draw_noise(relations.into_iter(), density, seed)?;
    let noised: HashMap<&FieldId, &Noised> = noise.iter().map(|n| (&n.field, n)).collect();
    let mut comps = Vec::new();
    for (_, c) in wsd.components() {
        for (f, v) in c.fields.iter().zip(&c.rows[0].values) {
            comps.push(match noised.get(f) {
                Some(n) => {
                    let p = 1.0 / n.values.len() as f64;
                    Component::new(
                        vec![f.clone()],
                        n.values.iter().map(|v| LocalWorld::new(vec![v.clone()], p)).collect(),
                    )?
                }
                None => Component::certain(f.clone(), v.clone()),
            });
        }
    }
    Wsd::new(schema.clone(), comps)
}

/// Replaces random template constants of a store without components by
/// placeholders over uniform or-sets, one component per field.
pub fn inject_noise_uwsdt(u: &Uwsdt, density: f64, seed: u64) -> Result<Uwsdt> {
    if u.component_ids().next().is_some() {
        return Err(Error::validation("noise can only be added to a database with a single world"));
    }
    let schema = u.schema();
    let mut relations = Vec::new();
    for rs in schema.relations() {
        let attrs: Vec<&str> = rs.attrs.iter().map(|a| &**a).collect();
        let rows = u.template(&rs.name).map_or(Vec::new(), |t| {
            t.rows()
                .iter()
                .map(|(tid, cells)| {
                    let vals = cells
                        .iter()
                        .map(|c| match c {
                            Cell::Const(v) => v,
                            Cell::Placeholder => unreachable!("no components"),
                        })
                        .collect();
                    (*tid, vals)
                })
                .collect()
        });
        relations.push((&*rs.name, attrs, rows));
    }
    let noise = draw_noise(relations.into_iter(), density, seed)?;
    let mut templates: HashMap<&str, Vec<(u32, Vec<Cell>)>> =
        u.templates().map(|(name, t)| (name, t.rows().to_vec())).collect();
    let (mut c, mut f, mut w) = (Vec::new(), Vec::new(), Vec::new());
    let mut pending: HashMap<&str, Vec<(u32, usize)>> = HashMap::new();
    for (k, n) in noise.iter().enumerate() {
        let cid = k as Cid + 1;
        let rs = schema.require(&n.field.rel)?;
        pending.entry(&rs.name).or_default().push((n.field.tid, rs.require_attr(&n.field.attr)?));
        let p = 1.0 / n.values.len() as f64;
        for (l, v) in n.values.iter().enumerate() {
            c.push((n.field.clone(), l as Lwid + 1, v.clone()));
            w.push((cid, l as Lwid + 1, p));
        }
        f.push((n.field.clone(), cid));
    }
    for (rel, cells) in pending {
        let rows = templates.get_mut(rel).expect("relation has a template");
        let pos: HashMap<u32, usize> = rows.iter().enumerate().map(|(k, r)| (r.0, k)).collect();
        for (tid, i) in cells {
            rows[pos[&tid]].1[i] = Cell::Placeholder;
        }
    }
    let templates = templates.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    Uwsdt::from_tables(schema.clone(), templates, c, f, w)
}
