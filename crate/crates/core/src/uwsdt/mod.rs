//! Uniform WSDs with templates: certain values live in per-relation template
//! rows, uncertain ones in component tables keyed by component id.
//!
//! The four tables are the templates, `C(fid, lwid, value)`,
//! `F(fid, cid)` and `W(cid, lwid, pr)`. Selections mark removed values
//! with ⊥ inside C instead of deleting C rows, so every field of a component
//! keeps one value per local world.

mod io;
mod ops;
mod plan;

pub use io::{load_dir, save_dir};
pub use ops::select_const_uwsdt;
pub use plan::{rewrite_query, Plan, Step, StepOp};

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use crate::decomposition::{check_same_fields, CellRef, Decomposition, Weights};
use crate::error::{Error, Result};
use crate::model::{Cid, Component, FieldId, LocalWorld, Lwid, RelationSchema, Schema, Wsd, COMPONENT_CAP, PROB_EPS};
use crate::value::Value;

/// A template cell.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Cell {
    Const(Value),
    Placeholder,
}

/// Template rows of one relation, in ascending tuple id order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Template {
    rows: Vec<(u32, Vec<Cell>)>,
    pos: HashMap<u32, usize>,
}

impl Template {
    pub fn rows(&self) -> &[(u32, Vec<Cell>)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, tid: u32) -> Option<&[Cell]> {
        self.pos.get(&tid).map(|&i| self.rows[i].1.as_slice())
    }

    fn get_mut(&mut self, tid: u32) -> Option<&mut Vec<Cell>> {
        self.pos.get(&tid).map(|&i| &mut self.rows[i].1)
    }

    fn push(&mut self, tid: u32, cells: Vec<Cell>) {
        debug_assert!(self.rows.last().map_or(true, |(t, _)| *t < tid));
        self.pos.insert(tid, self.rows.len());
        self.rows.push((tid, cells));
    }

    fn retain(&mut self, keep: impl Fn(u32) -> bool) {
        self.rows.retain(|(t, _)| keep(*t));
        self.pos = self.rows.iter().enumerate().map(|(i, (t, _))| (*t, i)).collect();
    }
}

/// Sizes reported by `stats` and the benchmark.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StatsReport {
    /// Distinct component ids in F.
    pub n_components: usize,
    /// Component ids mapped by at least two fields.
    pub n_components_gt1: usize,
    /// Rows of C: one per field and local world.
    pub c_rows: usize,
    /// Rows over all templates.
    pub template_rows: usize,
}

#[derive(Clone, Debug)]
pub struct Uwsdt {
    schema: Schema,
    templates: BTreeMap<Arc<str>, Arc<Template>>,
    c: HashMap<FieldId, Vec<Value>>,
    f: HashMap<FieldId, Cid>,
    members: BTreeMap<Cid, Vec<FieldId>>,
    w: BTreeMap<Cid, Vec<f64>>,
    next_cid: Cid,
}

impl Uwsdt {
    /// An empty store over relations without tuples.
    pub fn empty(schema: Schema) -> Self {
        let templates = schema.relations().iter().map(|r| (r.name.clone(), Arc::default())).collect();
        let mut u = Uwsdt {
            schema,
            templates,
            c: HashMap::new(),
            f: HashMap::new(),
            members: BTreeMap::new(),
            w: BTreeMap::new(),
            next_cid: 1,
        };
        u.sync_cards();
        u
    }

    /// Builds a store from table rows and checks every invariant.
    ///
    /// `c` rows are `(field, lwid, value)`, `w` rows `(cid, lwid, pr)`; local
    /// world ids of each component must be 1..=n.
    pub fn from_tables(
        schema: Schema,
        templates: Vec<(String, Vec<(u32, Vec<Cell>)>)>,
        c: Vec<(FieldId, Lwid, Value)>,
        f: Vec<(FieldId, Cid)>,
        w: Vec<(Cid, Lwid, f64)>,
    ) -> Result<Uwsdt> {
        let mut u = Uwsdt::empty(schema);
        for (rel, mut rows) in templates {
            let rs = u.schema.require(&rel)?.clone();
            rows.sort_by_key(|r| r.0);
            let mut t = Template::default();
            for (tid, cells) in rows {
                if tid == 0 {
                    return Err(Error::validation("tuple ids start at 1"));
                }
                if t.get(tid).is_some() {
                    return Err(Error::validation(format!("duplicate tuple id {rel}.t{tid}")));
                }
                if cells.len() != rs.arity() {
                    return Err(Error::validation(format!("template row {rel}.t{tid} has {} cells", cells.len())));
                }
                if cells.iter().any(|c| matches!(c, Cell::Const(v) if v.is_bottom())) {
                    return Err(Error::validation(format!("template row {rel}.t{tid} contains ⊥")));
                }
                t.push(tid, cells);
            }
            u.templates.insert(rs.name.clone(), Arc::new(t));
        }
        let mut weights: BTreeMap<Cid, BTreeMap<Lwid, f64>> = BTreeMap::new();
        for (cid, lwid, pr) in w {
            if !(pr.is_finite() && pr >= 0.0) {
                return Err(Error::validation(format!("invalid probability {pr} for component {cid}")));
            }
            if weights.entry(cid).or_default().insert(lwid, pr).is_some() {
                return Err(Error::validation(format!("duplicate W row ({cid}, {lwid})")));
            }
        }
        for (cid, ps) in weights {
            dense(ps.keys(), &format!("component {cid}"))?;
            let v: Vec<f64> = ps.into_values().collect();
            let total: f64 = v.iter().sum();
            if (total - 1.0).abs() > PROB_EPS {
                return Err(Error::validation(format!("component {cid} probabilities sum to {total}")));
            }
            u.w.insert(cid, v);
        }
        for (fid, cid) in f {
            u.check_placeholder(&fid)?;
            if !u.w.contains_key(&cid) {
                return Err(Error::validation(format!("{fid} maps to component {cid} without W rows")));
            }
            if u.f.insert(fid.clone(), cid).is_some() {
                return Err(Error::validation(format!("{fid} appears twice in F")));
            }
            u.members.entry(cid).or_default().push(fid);
        }
        let mut cols: HashMap<FieldId, BTreeMap<Lwid, Value>> = HashMap::new();
        for (fid, lwid, v) in c {
            if cols.entry(fid.clone()).or_default().insert(lwid, v).is_some() {
                return Err(Error::validation(format!("duplicate C row ({fid}, {lwid})")));
            }
        }
        for (fid, col) in cols {
            let cid = *u.f.get(&fid).ok_or_else(|| Error::validation(format!("C rows for {fid} without F row")))?;
            dense(col.keys(), &format!("C column {fid}"))?;
            if col.len() != u.w[&cid].len() {
                return Err(Error::validation(format!(
                    "{fid} has {} local worlds, component {cid} has {}",
                    col.len(),
                    u.w[&cid].len()
                )));
            }
            u.c.insert(fid, col.into_values().collect());
        }
        for (rel, t) in &u.templates {
            let rs = u.schema.require(rel)?;
            for (tid, cells) in t.rows() {
                for (a, cell) in rs.attrs.iter().zip(cells) {
                    let fid = FieldId::from_parts(rel, *tid, a);
                    if *cell == Cell::Placeholder && !u.c.contains_key(&fid) {
                        return Err(Error::validation(format!("placeholder {fid} has no C or F rows")));
                    }
                }
            }
        }
        let unused: Vec<Cid> = u.w.keys().filter(|k| !u.members.contains_key(k)).copied().collect();
        if let Some(cid) = unused.first() {
            return Err(Error::validation(format!("component {cid} has W rows but no fields")));
        }
        for m in u.members.values_mut() {
            m.sort();
        }
        let cids: Vec<Cid> = u.members.keys().copied().collect();
        for cid in cids {
            u.propagate(cid);
        }
        u.next_cid = u.w.keys().next_back().map_or(1, |k| k + 1);
        u.sync_cards();
        Ok(u)
    }

    fn check_placeholder(&self, fid: &FieldId) -> Result<()> {
        let rs = self.schema.require(&fid.rel)?;
        let i = rs.require_attr(&fid.attr)?;
        match self.templates[&rs.name].get(fid.tid) {
            Some(cells) if cells[i] == Cell::Placeholder => Ok(()),
            Some(_) => Err(Error::validation(format!("{fid} is in F but its template cell is a constant"))),
            None => Err(Error::validation(format!("{fid} is in F but has no template row"))),
        }
    }

    /// Converts a WSD; fields whose component has one local world become constants.
    ///
    /// Tuples that are ⊥ in every world are left out.
    pub fn from_wsd(wsd: &Wsd) -> Uwsdt {
        let mut u = Uwsdt::empty(wsd.schema().clone());
        let mut cid_map: HashMap<Cid, Cid> = HashMap::new();
        for rs in wsd.schema().relations() {
            let mut t = Template::default();
            for &tid in wsd.tids(&rs.name) {
                let fids: Vec<FieldId> = rs.attrs.iter().map(|a| FieldId::from_parts(&rs.name, tid, a)).collect();
                let cells: Vec<Cell> = fids
                    .iter()
                    .map(|f| {
                        let c = wsd.component_of(f).unwrap();
                        if c.len() == 1 {
                            Cell::Const(c.rows[0].values[c.col(f).unwrap()].clone())
                        } else {
                            Cell::Placeholder
                        }
                    })
                    .collect();
                if cells.iter().any(|c| matches!(c, Cell::Const(v) if v.is_bottom())) {
                    continue;
                }
                for (f, cell) in fids.iter().zip(&cells) {
                    if *cell == Cell::Placeholder {
                        let old = wsd.cid_of(f).unwrap();
                        let comp = wsd.component(old).unwrap();
                        let cid = *cid_map.entry(old).or_insert_with(|| {
                            let k = u.next_cid;
                            u.next_cid += 1;
                            u.w.insert(k, comp.rows.iter().map(|r| r.pr).collect());
                            k
                        });
                        let i = comp.col(f).unwrap();
                        u.add_field(f.clone(), cid, comp.column(i).cloned().collect());
                    }
                }
                t.push(tid, cells);
            }
            u.templates.insert(rs.name.clone(), Arc::new(t));
        }
        u.sync_cards();
        u
    }

    /// Converts back to a WSD with one certain component per template constant.
    pub fn to_wsd(&self) -> Result<Wsd> {
        let mut comps = Vec::new();
        for cid in self.members.keys() {
            comps.push(self.component_of(*cid));
        }
        for (rel, t) in &self.templates {
            let rs = self.schema.require(rel)?;
            for (tid, cells) in t.rows() {
                for (a, cell) in rs.attrs.iter().zip(cells) {
                    if let Cell::Const(v) = cell {
                        comps.push(Component::certain(FieldId::from_parts(rel, *tid, a), v.clone()));
                    }
                }
            }
        }
        Wsd::new(self.schema.clone(), comps)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn template(&self, rel: &str) -> Option<&Template> {
        self.templates.get(rel).map(|t| &**t)
    }

    pub fn templates(&self) -> impl Iterator<Item = (&str, &Template)> {
        self.templates.iter().map(|(k, v)| (&**k, &**v))
    }

    /// The component id a placeholder field maps to.
    pub fn cid_of(&self, f: &FieldId) -> Option<Cid> {
        self.f.get(f).copied()
    }

    /// C values of a placeholder field, indexed by local world id minus one.
    pub fn values(&self, f: &FieldId) -> Option<&[Value]> {
        self.c.get(f).map(|v| v.as_slice())
    }

    pub fn fields_of(&self, cid: Cid) -> &[FieldId] {
        self.members.get(&cid).map_or(&[], |v| v.as_slice())
    }

    pub fn component_ids(&self) -> impl Iterator<Item = Cid> + '_ {
        self.members.keys().copied()
    }

    /// F rows sorted by field.
    pub fn f_rows(&self) -> Vec<(FieldId, Cid)> {
        let mut v: Vec<_> = self.f.iter().map(|(k, c)| (k.clone(), *c)).collect();
        v.sort();
        v
    }

    /// C rows sorted by field, then local world.
    pub fn c_rows(&self) -> Vec<(FieldId, Lwid, Value)> {
        let mut keys: Vec<&FieldId> = self.c.keys().collect();
        keys.sort();
        keys.into_iter()
            .flat_map(|k| self.c[k].iter().enumerate().map(move |(i, v)| (k.clone(), i as Lwid + 1, v.clone())))
            .collect()
    }

    pub fn w_rows(&self) -> Vec<(Cid, Lwid, f64)> {
        self.w.iter().flat_map(|(c, ps)| ps.iter().enumerate().map(move |(i, p)| (*c, i as Lwid + 1, *p))).collect()
    }

    /// The component with id `cid` as a WSD component.
    pub fn component_of(&self, cid: Cid) -> Component {
        let fields = self.members[&cid].clone();
        let cols: Vec<&Vec<Value>> = fields.iter().map(|f| &self.c[f]).collect();
        let rows = self.w[&cid]
            .iter()
            .enumerate()
            .map(|(i, p)| LocalWorld::new(cols.iter().map(|c| c[i].clone()).collect(), *p))
            .collect();
        Component { fields, rows }
    }

    /// Sizes of the whole store, or of one relation's fields and template.
    pub fn stats(&self, rel: Option<&str>) -> Result<StatsReport> {
        if let Some(r) = rel {
            self.schema.require(r)?;
        }
        let mut per_cid: BTreeMap<Cid, usize> = BTreeMap::new();
        let mut c_rows = 0;
        for (fid, cid) in &self.f {
            if rel.map_or(true, |r| &*fid.rel == r) {
                *per_cid.entry(*cid).or_default() += 1;
                c_rows += self.c[fid].len();
            }
        }
        let template_rows =
            self.templates.iter().filter(|(k, _)| rel.map_or(true, |r| &***k == r)).map(|(_, t)| t.len()).sum();
        Ok(StatsReport {
            n_components: per_cid.len(),
            n_components_gt1: per_cid.values().filter(|n| **n >= 2).count(),
            c_rows,
            template_rows,
        })
    }

    /// Removes a relation with its template and fields.
    pub fn drop_relation(&mut self, rel: &str) -> Result<()> {
        let name = self.schema.require(rel)?.name.clone();
        let tids: BTreeSet<u32> = self.templates[&name].rows().iter().map(|r| r.0).collect();
        self.remove_tuples(rel, &tids);
        self.templates.remove(&name);
        self.schema.remove(rel);
        Ok(())
    }

    fn sync_cards(&mut self) {
        for (rel, t) in &self.templates {
            if let Some(rs) = self.schema.relation_mut(rel) {
                rs.max_card = t.len();
            }
        }
    }

    fn fresh(&self, p: &str) -> Result<()> {
        if self.schema.contains(p) {
            return Err(Error::schema(format!("relation {p} already exists")));
        }
        Ok(())
    }

    fn add_relation(&mut self, name: &str, attrs: Vec<Arc<str>>) -> Result<Arc<str>> {
        self.fresh(name)?;
        let rs = RelationSchema { name: Arc::from(name), attrs, max_card: 0 };
        let key = rs.name.clone();
        self.schema.push(rs)?;
        self.templates.insert(key.clone(), Arc::default());
        Ok(key)
    }

    fn template_mut(&mut self, rel: &Arc<str>) -> &mut Template {
        Arc::make_mut(self.templates.get_mut(rel).expect("known relation"))
    }

    fn push_row(&mut self, rel: &Arc<str>, tid: u32, cells: Vec<Cell>) {
        self.template_mut(rel).push(tid, cells);
    }

    fn add_field(&mut self, f: FieldId, cid: Cid, values: Vec<Value>) {
        self.members.entry(cid).or_default().push(f.clone());
        self.f.insert(f.clone(), cid);
        self.c.insert(f, values);
    }

    fn new_cid(&mut self, weights: Vec<f64>) -> Cid {
        let k = self.next_cid;
        self.next_cid += 1;
        self.w.insert(k, weights);
        k
    }

    /// Adds `dst` to the component of placeholder `src` with a copy of its column.
    fn copy_field(&mut self, src: &FieldId, dst: FieldId) {
        let cid = self.f[src];
        let col = self.c[src].clone();
        self.add_field(dst, cid, col);
    }

    fn remove_field(&mut self, f: &FieldId) {
        if let Some(cid) = self.f.remove(f) {
            self.c.remove(f);
            let m = self.members.get_mut(&cid).unwrap();
            m.retain(|g| g != f);
            if m.is_empty() {
                self.members.remove(&cid);
                self.w.remove(&cid);
            }
        }
    }

    /// Removes template rows and their fields.
    fn remove_tuples(&mut self, rel: &str, tids: &BTreeSet<u32>) {
        if tids.is_empty() {
            return;
        }
        let rs = self.schema.require(rel).unwrap().clone();
        for &tid in tids {
            for a in &rs.attrs {
                self.remove_field(&FieldId::from_parts(&rs.name, tid, a));
            }
        }
        self.template_mut(&rs.name).retain(|t| !tids.contains(&t));
        self.sync_cards();
    }

    /// Composes components into a fresh one, propagating ⊥ per tuple.
    fn merge(&mut self, cids: &[Cid]) -> Result<Cid> {
        let mut uniq = cids.to_vec();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() == 1 {
            return Ok(uniq[0]);
        }
        let sizes: Vec<usize> = uniq.iter().map(|c| self.w[c].len()).collect();
        let n = sizes.iter().fold(1usize, |a, s| a.saturating_mul(*s));
        if n > COMPONENT_CAP {
            return Err(Error::resource(format!("composed component would have {n} local worlds")));
        }
        // row k picks index (k / stride_i) % size_i from component i; the first is outermost
        let mut strides = vec![1usize; uniq.len()];
        for i in (0..uniq.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * sizes[i + 1];
        }
        let pick = |k: usize, i: usize| (k / strides[i]) % sizes[i];
        let weights: Vec<f64> =
            (0..n).map(|k| uniq.iter().enumerate().map(|(i, c)| self.w[c][pick(k, i)]).product()).collect();
        let new = self.new_cid(weights);
        for (i, old) in uniq.iter().enumerate() {
            let fields = self.members.remove(old).unwrap();
            self.w.remove(old);
            for f in fields {
                let col = self.c.remove(&f).unwrap();
                let wide = (0..n).map(|k| col[pick(k, i)].clone()).collect();
                self.add_field(f, new, wide);
            }
        }
        self.propagate(new);
        Ok(new)
    }

    /// Makes every tuple within the component fully present or fully ⊥ in each local world.
    fn propagate(&mut self, cid: Cid) {
        let mut groups: BTreeMap<(Arc<str>, u32), Vec<FieldId>> = BTreeMap::new();
        for f in &self.members[&cid] {
            groups.entry((f.rel.clone(), f.tid)).or_default().push(f.clone());
        }
        for g in groups.values().filter(|g| g.len() > 1) {
            self.propagate_group(g);
        }
    }

    fn propagate_group(&mut self, g: &[FieldId]) {
        let n = self.c[&g[0]].len();
        let dead: Vec<usize> = (0..n).filter(|&k| g.iter().any(|f| self.c[f][k].is_bottom())).collect();
        if dead.is_empty() {
            return;
        }
        for f in g {
            let col = self.c.get_mut(f).unwrap();
            for &k in &dead {
                col[k] = Value::Bottom;
            }
        }
    }

    /// Placeholder fields of one tuple.
    fn placeholders(&self, rel: &Arc<str>, tid: u32) -> Vec<FieldId> {
        let rs = self.schema.require(rel).unwrap();
        let cells = self.templates[rel].get(tid).unwrap();
        rs.attrs
            .iter()
            .zip(cells)
            .filter(|(_, c)| **c == Cell::Placeholder)
            .map(|(a, _)| FieldId::from_parts(rel, tid, a))
            .collect()
    }

    /// A tuple is invalid when one of its placeholders is ⊥ in every local world.
    fn is_invalid(&self, rel: &Arc<str>, tid: u32) -> bool {
        self.placeholders(rel, tid).iter().any(|f| self.c[f].iter().all(Value::is_bottom))
    }
}

fn dense<'a>(keys: impl Iterator<Item = &'a Lwid>, what: &str) -> Result<()> {
    for (i, k) in keys.enumerate() {
        if *k as usize != i + 1 {
            return Err(Error::validation(format!("{what}: local world ids must be 1..n")));
        }
    }
    Ok(())
}

impl Weights for Uwsdt {
    fn weights(&self, cid: Cid) -> Option<Cow<'_, [f64]>> {
        self.w.get(&cid).map(|v| Cow::Borrowed(v.as_slice()))
    }
}

impl Decomposition for Uwsdt {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn tuple_ids(&self, rel: &str) -> Cow<'_, [u32]> {
        Cow::Owned(self.templates.get(rel).map_or(Vec::new(), |t| t.rows().iter().map(|r| r.0).collect()))
    }

    fn cell(&self, f: &FieldId) -> Option<CellRef> {
        let rs = self.schema.relation(&f.rel)?;
        let i = rs.attr_index(&f.attr)?;
        match &self.templates.get(&f.rel)?.get(f.tid)?[i] {
            Cell::Const(v) => Some(CellRef::Const(v.clone())),
            Cell::Placeholder => self.f.get(f).map(|c| CellRef::Var(*c)),
        }
    }

    fn component(&self, cid: Cid) -> Option<Cow<'_, Component>> {
        self.members.contains_key(&cid).then(|| Cow::Owned(self.component_of(cid)))
    }

    fn replace_components(&mut self, old: &[Cid], new: Component) -> Result<Cid> {
        let olds: Vec<Component> =
            old.iter().filter(|c| self.members.contains_key(c)).map(|c| self.component_of(*c)).collect();
        if olds.len() != old.len() {
            return Err(Error::validation("unknown component id"));
        }
        check_same_fields(olds.iter().map(Some), &new)?;
        for c in old {
            let fields = self.members.remove(c).unwrap();
            self.w.remove(c);
            for f in fields {
                self.f.remove(&f);
                self.c.remove(&f);
            }
        }
        let cid = self.new_cid(new.rows.iter().map(|r| r.pr).collect());
        for (i, f) in new.fields.iter().enumerate() {
            self.add_field(f.clone(), cid, new.column(i).cloned().collect());
        }
        Ok(cid)
    }
}
