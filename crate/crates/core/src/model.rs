//! Schemas, worlds, components and world-set decompositions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::value::Value;

/// Absolute tolerance for every sum-to-one check.
pub const PROB_EPS: f64 = 1e-9;
/// Default bound on the number of worlds the enumeration oracle will produce.
pub const DEFAULT_WORLD_CAP: usize = 1_000_000;
/// Bound on the number of local worlds a single composed component may have.
pub const COMPONENT_CAP: usize = 1_000_000;

pub type Cid = u32;
/// Local-world id; 1-based position of a row within its component.
pub type Lwid = u32;
pub type Tuple = Vec<Value>;

/// The field `rel.t<tid>.attr`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldId {
    pub rel: Arc<str>,
    pub tid: u32,
    pub attr: Arc<str>,
}

impl FieldId {
    pub fn new(rel: &str, tid: u32, attr: &str) -> Self {
        FieldId { rel: Arc::from(rel), tid, attr: Arc::from(attr) }
    }

    pub(crate) fn from_parts(rel: &Arc<str>, tid: u32, attr: &Arc<str>) -> Self {
        FieldId { rel: rel.clone(), tid, attr: attr.clone() }
    }

    pub fn same_tuple(&self, other: &FieldId) -> bool {
        self.tid == other.tid && self.rel == other.rel
    }
}

impl fmt::Display for FieldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.t{}.{}", self.rel, self.tid, self.attr)
    }
}

impl fmt::Debug for FieldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationSchema {
    pub name: Arc<str>,
    pub attrs: Vec<Arc<str>>,
    /// |R|_max: the number of tuple slots.
    pub max_card: usize,
}

impl RelationSchema {
    pub fn new(name: &str, attrs: &[&str], max_card: usize) -> Self {
        RelationSchema { name: Arc::from(name), attrs: attrs.iter().map(|a| Arc::from(*a)).collect(), max_card }
    }

    pub fn arity(&self) -> usize {
        self.attrs.len()
    }

    pub fn attr_index(&self, attr: &str) -> Option<usize> {
        self.attrs.iter().position(|a| &**a == attr)
    }

    pub fn require_attr(&self, attr: &str) -> Result<usize> {
        self.attr_index(attr).ok_or_else(|| Error::schema(format!("relation {} has no attribute {attr}", self.name)))
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for a in &self.attrs {
            if !seen.insert(a) {
                return Err(Error::schema(format!("duplicate attribute {a} in {}", self.name)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Schema {
    relations: Vec<RelationSchema>,
}

impl Schema {
    pub fn new(relations: Vec<RelationSchema>) -> Result<Self> {
        let mut s = Schema::default();
        for r in relations {
            s.push(r)?;
        }
        Ok(s)
    }

    pub fn relations(&self) -> &[RelationSchema] {
        &self.relations
    }

    pub fn relation(&self, name: &str) -> Option<&RelationSchema> {
        self.relations.iter().find(|r| &*r.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&RelationSchema> {
        self.relation(name).ok_or_else(|| Error::schema(format!("unknown relation {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.relation(name).is_some()
    }

    pub(crate) fn push(&mut self, r: RelationSchema) -> Result<()> {
        r.validate()?;
        if self.contains(&r.name) {
            return Err(Error::schema(format!("relation {} already exists", r.name)));
        }
        self.relations.push(r);
        Ok(())
    }

    pub(crate) fn relation_mut(&mut self, name: &str) -> Option<&mut RelationSchema> {
        self.relations.iter_mut().find(|r| &*r.name == name)
    }

    pub(crate) fn remove(&mut self, name: &str) {
        self.relations.retain(|r| &*r.name != name);
    }

    /// Picks a relation name not yet in use, of the form `prefix`, `prefix1`, ...
    pub fn fresh_name(&self, prefix: &str) -> String {
        if !self.contains(prefix) {
            return prefix.to_string();
        }
        (1..).map(|i| format!("{prefix}{i}")).find(|n| !self.contains(n)).unwrap()
    }
}

static NO_TUPLES: BTreeSet<Tuple> = BTreeSet::new();

/// One possible database: a set of tuples per relation.
///
/// Only nonempty relations are stored, so a missing entry means an empty relation.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct World {
    pub relations: BTreeMap<Arc<str>, BTreeSet<Tuple>>,
}

impl World {
    pub fn relation(&self, name: &str) -> &BTreeSet<Tuple> {
        self.relations.get(name).unwrap_or(&NO_TUPLES)
    }

    pub(crate) fn insert(&mut self, rel: &Arc<str>, t: Tuple) {
        self.relations.entry(rel.clone()).or_default().insert(t);
    }

    /// The world restricted to the named relations.
    pub fn restrict(&self, names: &[&str]) -> World {
        World {
            relations: self
                .relations
                .iter()
                .filter(|(k, _)| names.contains(&&***k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }
}

impl fmt::Debug for World {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (k, v) in &self.relations {
            m.entry(k, v);
        }
        m.finish()
    }
}

/// Sums probabilities of identical worlds.
pub fn aggregate(worlds: impl IntoIterator<Item = (World, f64)>) -> BTreeMap<World, f64> {
    let mut out = BTreeMap::new();
    for (w, p) in worlds {
        *out.entry(w).or_insert(0.0) += p;
    }
    out
}

/// Compares two aggregated world distributions with an absolute tolerance.
pub fn distributions_match(a: &BTreeMap<World, f64>, b: &BTreeMap<World, f64>, eps: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|((wa, pa), (wb, pb))| wa == wb && (pa - pb).abs() <= eps)
}

/// The inlined form of a world-set: one row per world.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldSetRelation {
    pub columns: Vec<FieldId>,
    pub rows: Vec<(Vec<Value>, f64)>,
}

impl WorldSetRelation {
    /// Extracts the world encoded by row `i`.
    pub fn world(&self, i: usize) -> World {
        extract_by_columns(&self.columns, &self.rows[i].0)
    }

    pub fn worlds(&self) -> Vec<(World, f64)> {
        (0..self.rows.len()).map(|i| (self.world(i), self.rows[i].1)).collect()
    }
}

fn extract_by_columns(columns: &[FieldId], row: &[Value]) -> World {
    let mut slices: BTreeMap<(Arc<str>, u32), Vec<&Value>> = BTreeMap::new();
    let mut world = World::default();
    for (f, v) in columns.iter().zip(row) {
        slices.entry((f.rel.clone(), f.tid)).or_default().push(v);
    }
    for ((rel, _), vals) in slices {
        if vals.iter().all(|v| !v.is_bottom()) {
            world.insert(&rel, vals.into_iter().cloned().collect());
        }
    }
    world
}

/// Inlines worlds into a world-set relation, padding each relation with ⊥ blocks.
///
/// Tuples are concatenated in sorted order so the result is deterministic.
pub fn inline_worlds(worlds: &[(World, f64)], schema: &Schema) -> Result<WorldSetRelation> {
    let mut columns = Vec::new();
    for r in schema.relations() {
        for t in 1..=r.max_card as u32 {
            for a in &r.attrs {
                columns.push(FieldId::from_parts(&r.name, t, a));
            }
        }
    }
    let mut rows = Vec::with_capacity(worlds.len());
    for (w, p) in worlds {
        let mut row = Vec::with_capacity(columns.len());
        for r in schema.relations() {
            let tuples = w.relation(&r.name);
            if tuples.len() > r.max_card {
                return Err(Error::validation(format!(
                    "world has {} tuples in {} but |{}|_max = {}",
                    tuples.len(),
                    r.name,
                    r.name,
                    r.max_card
                )));
            }
            for t in tuples {
                if t.len() != r.arity() || t.iter().any(Value::is_bottom) {
                    return Err(Error::validation(format!("malformed tuple {t:?} in {}", r.name)));
                }
                row.extend(t.iter().cloned());
            }
            row.extend(std::iter::repeat(Value::Bottom).take((r.max_card - tuples.len()) * r.arity()));
        }
        rows.push((row, *p));
    }
    for (w, _) in worlds {
        if let Some(extra) = w.relations.keys().find(|k| !schema.contains(k)) {
            return Err(Error::validation(format!("world mentions unknown relation {extra}")));
        }
    }
    Ok(WorldSetRelation { columns, rows })
}

/// Reads a world back from an inlined row laid out per `schema` (relation blocks of `max_card` slots).
pub fn extract_world(row: &[Value], schema: &Schema) -> Result<World> {
    let width: usize = schema.relations().iter().map(|r| r.max_card * r.arity()).sum();
    if row.len() != width {
        return Err(Error::validation(format!("row has {} values, schema needs {width}", row.len())));
    }
    let mut world = World::default();
    let mut pos = 0;
    for r in schema.relations() {
        for _ in 0..r.max_card {
            let slice = &row[pos..pos + r.arity()];
            pos += r.arity();
            if !slice.iter().any(Value::is_bottom) {
                world.insert(&r.name, slice.to_vec());
            }
        }
    }
    Ok(world)
}

/// A row of a component.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalWorld {
    pub values: Vec<Value>,
    pub pr: f64,
}

impl LocalWorld {
    pub fn new(values: Vec<Value>, pr: f64) -> Self {
        LocalWorld { values, pr }
    }
}

/// A relation over a set of fields whose rows are local worlds.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub fields: Vec<FieldId>,
    pub rows: Vec<LocalWorld>,
}

impl Component {
    /// Builds a component, dropping zero-probability rows and checking that the rest sum to one.
    pub fn new(fields: Vec<FieldId>, rows: Vec<LocalWorld>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for f in &fields {
            if !seen.insert(f) {
                return Err(Error::validation(format!("field {f} appears twice in a component")));
            }
        }
        let mut kept = Vec::with_capacity(rows.len());
        for r in rows {
            if r.values.len() != fields.len() {
                return Err(Error::validation(format!(
                    "local world has {} values for {} fields",
                    r.values.len(),
                    fields.len()
                )));
            }
            if !(r.pr.is_finite() && r.pr >= 0.0) {
                return Err(Error::validation(format!("invalid probability {}", r.pr)));
            }
            if r.pr > 0.0 {
                kept.push(r);
            }
        }
        if kept.is_empty() {
            return Err(Error::validation("component has no local world with positive probability"));
        }
        let c = Component { fields, rows: kept };
        let total = c.total_pr();
        if (total - 1.0).abs() > PROB_EPS {
            return Err(Error::validation(format!("component probabilities sum to {total}, not 1")));
        }
        Ok(c)
    }

    /// Uniform component from plain value rows.
    pub fn uniform(fields: Vec<FieldId>, rows: Vec<Vec<Value>>) -> Result<Self> {
        let p = 1.0 / rows.len().max(1) as f64;
        Component::new(fields, rows.into_iter().map(|v| LocalWorld::new(v, p)).collect())
    }

    /// A one-field, one-row component.
    pub fn certain(field: FieldId, value: Value) -> Self {
        Component { fields: vec![field], rows: vec![LocalWorld::new(vec![value], 1.0)] }
    }

    pub fn total_pr(&self) -> f64 {
        self.rows.iter().map(|r| r.pr).sum()
    }

    pub fn col(&self, f: &FieldId) -> Option<usize> {
        self.fields.iter().position(|g| g == f)
    }

    pub fn column<'a>(&'a self, i: usize) -> impl Iterator<Item = &'a Value> + 'a {
        self.rows.iter().map(move |r| &r.values[i])
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Cross product of the local worlds, multiplying probabilities.
    pub fn compose(&self, other: &Component) -> Result<Component> {
        if let Some(f) = self.fields.iter().find(|f| other.fields.contains(f)) {
            return Err(Error::schema(format!("cannot compose components sharing field {f}")));
        }
        let n = self.rows.len().saturating_mul(other.rows.len());
        if n > COMPONENT_CAP {
            return Err(Error::resource(format!("composed component would have {n} local worlds")));
        }
        let mut fields = self.fields.clone();
        fields.extend(other.fields.iter().cloned());
        let mut rows = Vec::with_capacity(n);
        for a in &self.rows {
            for b in &other.rows {
                let mut values = a.values.clone();
                values.extend(b.values.iter().cloned());
                rows.push(LocalWorld::new(values, a.pr * b.pr));
            }
        }
        Ok(Component { fields, rows })
    }

    /// Adds `dst` as a copy of column `src`.
    pub fn ext(&self, src: &FieldId, dst: FieldId) -> Result<Component> {
        let mut c = self.clone();
        c.ext_in_place(src, dst)?;
        Ok(c)
    }

    pub(crate) fn ext_in_place(&mut self, src: &FieldId, dst: FieldId) -> Result<()> {
        let i = self.col(src).ok_or_else(|| Error::schema(format!("{src} is not in the component")))?;
        if self.col(&dst).is_some() {
            return Err(Error::schema(format!("{dst} is already in the component")));
        }
        self.fields.push(dst);
        for r in &mut self.rows {
            let v = r.values[i].clone();
            r.values.push(v);
        }
        Ok(())
    }

    /// Makes every tuple either fully present or fully ⊥ within each local world.
    pub fn propagate_bottom(&mut self) {
        let groups = self.tuple_groups();
        for r in &mut self.rows {
            for g in &groups {
                if g.len() > 1 && g.iter().any(|&i| r.values[i].is_bottom()) {
                    for &i in g {
                        r.values[i] = Value::Bottom;
                    }
                }
            }
        }
    }

    /// Column positions grouped by (relation, tuple id).
    pub(crate) fn tuple_groups(&self) -> Vec<Vec<usize>> {
        let mut groups: BTreeMap<(&str, u32), Vec<usize>> = BTreeMap::new();
        for (i, f) in self.fields.iter().enumerate() {
            groups.entry((&f.rel, f.tid)).or_default().push(i);
        }
        groups.into_values().collect()
    }

    /// Removes the given columns; rows are kept as they are (no merging).
    pub fn project_out(&mut self, drop: &dyn Fn(&FieldId) -> bool) {
        let keep: Vec<usize> = (0..self.fields.len()).filter(|&i| !drop(&self.fields[i])).collect();
        if keep.len() == self.fields.len() {
            return;
        }
        self.fields = keep.iter().map(|&i| self.fields[i].clone()).collect();
        for r in &mut self.rows {
            r.values = keep.iter().map(|&i| std::mem::replace(&mut r.values[i], Value::Bottom)).collect();
        }
    }

    /// Projects onto `fields` and sums probabilities of rows that become equal.
    pub fn marginal(&self, fields: &[FieldId]) -> Component {
        let idx: Vec<usize> = fields.iter().map(|f| self.col(f).expect("field of component")).collect();
        let mut acc: BTreeMap<Vec<Value>, f64> = BTreeMap::new();
        let mut order = Vec::new();
        for r in &self.rows {
            let key: Vec<Value> = idx.iter().map(|&i| r.values[i].clone()).collect();
            match acc.get_mut(&key) {
                Some(p) => *p += r.pr,
                None => {
                    order.push(key.clone());
                    acc.insert(key, r.pr);
                }
            }
        }
        let rows = order
            .into_iter()
            .map(|k| {
                let p = acc[&k];
                LocalWorld::new(k, p)
            })
            .collect();
        Component { fields: fields.to_vec(), rows }
    }

    /// Divides every probability by the total.
    pub(crate) fn renormalize(&mut self) {
        let total = self.total_pr();
        for r in &mut self.rows {
            r.pr /= total;
        }
    }

    /// Reorders columns to match `fields` (same field set).
    pub fn reorder(&self, fields: &[FieldId]) -> Component {
        let idx: Vec<usize> = fields.iter().map(|f| self.col(f).expect("same field set")).collect();
        Component {
            fields: fields.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| LocalWorld::new(idx.iter().map(|&i| r.values[i].clone()).collect(), r.pr))
                .collect(),
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.fields.iter().map(|x| x.to_string()).collect();
        writeln!(f, "{} | Pr", names.join(" "))?;
        for r in &self.rows {
            let vals: Vec<String> = r.values.iter().map(|v| v.to_string()).collect();
            writeln!(f, "{} | {}", vals.join(" "), r.pr)?;
        }
        Ok(())
    }
}

/// A probabilistic world-set decomposition: a product of components.
#[derive(Clone, Debug)]
pub struct Wsd {
    schema: Schema,
    tids: BTreeMap<Arc<str>, Vec<u32>>,
    components: BTreeMap<Cid, Component>,
    index: HashMap<FieldId, Cid>,
    next_cid: Cid,
}

impl Wsd {
    /// Builds a WSD from its components.
    ///
    /// Tuple ids are taken from the fields present; every tuple must have all
    /// attributes of its relation. `max_card` in the schema is recomputed.
    /// Components are brought into canonical ⊥ form.
    pub fn new(schema: Schema, components: Vec<Component>) -> Result<Self> {
        let mut wsd = Wsd {
            tids: schema.relations().iter().map(|r| (r.name.clone(), Vec::new())).collect(),
            schema,
            components: BTreeMap::new(),
            index: HashMap::new(),
            next_cid: 1,
        };
        for c in components {
            let c = Component::new(c.fields, c.rows)?;
            for f in &c.fields {
                let r = wsd.schema.require(&f.rel)?;
                r.require_attr(&f.attr)?;
                if f.tid == 0 {
                    return Err(Error::validation(format!("tuple ids start at 1 ({f})")));
                }
            }
            wsd.insert(c)?;
        }
        let mut per_tuple: BTreeMap<(Arc<str>, u32), usize> = BTreeMap::new();
        for f in wsd.index.keys() {
            *per_tuple.entry((f.rel.clone(), f.tid)).or_default() += 1;
        }
        for ((rel, tid), n) in per_tuple {
            let arity = wsd.schema.require(&rel)?.arity();
            if n != arity {
                return Err(Error::validation(format!("tuple {rel}.t{tid} has {n} of {arity} fields")));
            }
            wsd.tids.get_mut(&rel).unwrap().push(tid);
        }
        wsd.sync_cards();
        for c in wsd.components.values_mut() {
            c.propagate_bottom();
        }
        Ok(wsd)
    }

    fn sync_cards(&mut self) {
        for (rel, ts) in &mut self.tids {
            ts.sort_unstable();
            ts.dedup();
            self.schema.relation_mut(rel).unwrap().max_card = ts.len();
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Tuple ids of a relation in ascending order.
    pub fn tids(&self, rel: &str) -> &[u32] {
        self.tids.get(rel).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn components(&self) -> impl Iterator<Item = (Cid, &Component)> {
        self.components.iter().map(|(k, v)| (*k, v))
    }

    pub fn component(&self, cid: Cid) -> Option<&Component> {
        self.components.get(&cid)
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn cid_of(&self, f: &FieldId) -> Option<Cid> {
        self.index.get(f).copied()
    }

    pub fn component_of(&self, f: &FieldId) -> Option<&Component> {
        self.cid_of(f).map(|c| &self.components[&c])
    }

    pub(crate) fn require_cid(&self, f: &FieldId) -> Result<Cid> {
        self.cid_of(f).ok_or_else(|| Error::schema(format!("no component holds {f}")))
    }

    /// Total number of cells (values) over all components.
    pub fn cell_count(&self) -> usize {
        self.components.values().map(|c| c.fields.len() * c.rows.len()).sum()
    }

    /// The field partition induced by the components, as sorted field sets.
    pub fn partition(&self) -> BTreeSet<BTreeSet<FieldId>> {
        self.components.values().map(|c| c.fields.iter().cloned().collect()).collect()
    }

    pub(crate) fn insert(&mut self, c: Component) -> Result<Cid> {
        let cid = self.next_cid;
        self.next_cid += 1;
        for f in &c.fields {
            if self.index.insert(f.clone(), cid).is_some() {
                return Err(Error::validation(format!("field {f} appears in two components")));
            }
        }
        self.components.insert(cid, c);
        Ok(cid)
    }

    pub(crate) fn take(&mut self, cid: Cid) -> Component {
        let c = self.components.remove(&cid).expect("live component");
        for f in &c.fields {
            self.index.remove(f);
        }
        c
    }

    /// Replaces components in place, keeping the index coherent. Field sets may differ.
    pub(crate) fn replace(&mut self, old: &[Cid], new: Component) -> Cid {
        for &cid in old {
            self.take(cid);
        }
        self.insert(new).expect("replacement fields are free")
    }

    pub(crate) fn component_mut(&mut self, cid: Cid) -> &mut Component {
        self.components.get_mut(&cid).expect("live component")
    }

    /// Composes the given components into one (propagating ⊥) and returns its id.
    pub(crate) fn merge(&mut self, cids: &[Cid]) -> Result<Cid> {
        let mut uniq: Vec<Cid> = cids.to_vec();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() == 1 {
            return Ok(uniq[0]);
        }
        let mut acc = self.components[&uniq[0]].clone();
        for cid in &uniq[1..] {
            acc = acc.compose(&self.components[cid])?;
        }
        acc.propagate_bottom();
        Ok(self.replace(&uniq, acc))
    }

    /// Adds field columns to existing components; used by copy-style operators.
    pub(crate) fn ext(&mut self, src: &FieldId, dst: FieldId) -> Result<()> {
        let cid = self.require_cid(src)?;
        if self.index.contains_key(&dst) {
            return Err(Error::schema(format!("{dst} already exists")));
        }
        self.components.get_mut(&cid).unwrap().ext_in_place(src, dst.clone())?;
        self.index.insert(dst, cid);
        Ok(())
    }

    /// Registers a relation with the given tuple ids (fields must be added by the caller).
    pub(crate) fn add_relation(&mut self, name: &str, attrs: Vec<Arc<str>>, tids: Vec<u32>) -> Result<()> {
        let rs = RelationSchema { name: Arc::from(name), attrs, max_card: tids.len() };
        let key = rs.name.clone();
        self.schema.push(rs)?;
        self.tids.insert(key, tids);
        self.sync_cards();
        Ok(())
    }

    /// Removes all fields matching `drop` from every component; empty components disappear.
    pub(crate) fn drop_fields(&mut self, drop: &dyn Fn(&FieldId) -> bool) {
        let cids: Vec<Cid> =
            self.components.iter().filter(|(_, c)| c.fields.iter().any(drop)).map(|(k, _)| *k).collect();
        for cid in cids {
            let c = self.components.get_mut(&cid).unwrap();
            for f in c.fields.iter().filter(|f| drop(f)) {
                self.index.remove(f);
            }
            c.project_out(drop);
            if c.fields.is_empty() {
                self.components.remove(&cid);
            }
        }
    }

    /// Removes tuple ids from a relation together with their fields.
    pub(crate) fn remove_tuples(&mut self, rel: &str, tids: &BTreeSet<u32>) {
        if tids.is_empty() {
            return;
        }
        self.drop_fields(&|f| &*f.rel == rel && tids.contains(&f.tid));
        if let Some(ts) = self.tids.get_mut(rel) {
            ts.retain(|t| !tids.contains(t));
        }
        self.sync_cards();
    }

    pub(crate) fn set_attrs(&mut self, rel: &str, attrs: Vec<Arc<str>>) {
        self.schema.relation_mut(rel).expect("known relation").attrs = attrs;
    }

    pub(crate) fn rename_relation_attr(&mut self, rel: &str, from: &str, to: &str) -> Result<()> {
        let r = self.schema.require(rel)?;
        r.require_attr(from)?;
        if r.attr_index(to).is_some() {
            return Err(Error::schema(format!("{rel} already has attribute {to}")));
        }
        let to: Arc<str> = Arc::from(to);
        let rs = self.schema.relation_mut(rel).unwrap();
        let i = rs.attr_index(from).unwrap();
        rs.attrs[i] = to.clone();
        let mut moved = Vec::new();
        for (cid, c) in self.components.iter_mut() {
            for f in c.fields.iter_mut() {
                if &*f.rel == rel && &*f.attr == from {
                    let old = std::mem::replace(f, FieldId { rel: f.rel.clone(), tid: f.tid, attr: to.clone() });
                    moved.push((old, f.clone(), *cid));
                }
            }
        }
        for (old, new, cid) in moved {
            self.index.remove(&old);
            self.index.insert(new, cid);
        }
        Ok(())
    }

    /// Removes a relation and all its fields.
    pub fn drop_relation(&mut self, rel: &str) -> Result<()> {
        self.schema.require(rel)?;
        self.drop_fields(&|f| &*f.rel == rel);
        self.schema.remove(rel);
        self.tids.remove(rel);
        Ok(())
    }

    /// Number of worlds in the product (saturating).
    pub fn world_count(&self) -> usize {
        self.components.values().fold(1usize, |acc, c| acc.saturating_mul(c.len()))
    }

    /// The world-set relation obtained as the product of the components.
    ///
    /// Columns follow schema order, then tuple id, then attribute order.
    pub fn world_set_relation(&self, cap: usize) -> Result<WorldSetRelation> {
        let n = self.world_count();
        if n > cap {
            return Err(Error::resource(format!("{n} worlds exceed the enumeration cap of {cap}")));
        }
        let mut columns = Vec::new();
        for r in self.schema.relations() {
            for &t in self.tids(&r.name) {
                for a in &r.attrs {
                    columns.push(FieldId::from_parts(&r.name, t, a));
                }
            }
        }
        let pos: HashMap<&FieldId, usize> = columns.iter().enumerate().map(|(i, f)| (f, i)).collect();
        let comps: Vec<(&Component, Vec<usize>)> =
            self.components.values().map(|c| (c, c.fields.iter().map(|f| pos[f]).collect())).collect();
        let mut rows = Vec::with_capacity(n);
        let mut choice = vec![0usize; comps.len()];
        let mut row = vec![Value::Bottom; columns.len()];
        loop {
            let mut p = 1.0;
            for ((c, cols), &k) in comps.iter().zip(&choice) {
                let lw = &c.rows[k];
                p *= lw.pr;
                for (v, &col) in lw.values.iter().zip(cols) {
                    row[col] = v.clone();
                }
            }
            rows.push((row.clone(), p));
            let mut i = 0;
            loop {
                if i == comps.len() {
                    return Ok(WorldSetRelation { columns, rows });
                }
                choice[i] += 1;
                if choice[i] < comps[i].0.len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }
}

/// The ground-truth oracle: every world of the product with its probability.
///
/// Identical worlds from different local-world choices are not merged.
pub fn enumerate_worlds(wsd: &Wsd, cap: usize) -> Result<Vec<(World, f64)>> {
    Ok(wsd.world_set_relation(cap)?.worlds())
}

/// A relation whose tuples are independent events.
#[derive(Clone, Debug)]
pub struct TiRelation {
    pub name: String,
    pub attrs: Vec<String>,
    pub tuples: Vec<(Tuple, f64)>,
}

/// Embeds tuple-independent relations: one two-row component per tuple.
pub fn from_tuple_independent(relations: &[TiRelation]) -> Result<Wsd> {
    let mut schema = Vec::new();
    let mut comps = Vec::new();
    for r in relations {
        let attrs: Vec<&str> = r.attrs.iter().map(|s| s.as_str()).collect();
        schema.push(RelationSchema::new(&r.name, &attrs, r.tuples.len()));
        for (i, (t, c)) in r.tuples.iter().enumerate() {
            if !(*c > 0.0 && *c <= 1.0) {
                return Err(Error::validation(format!("confidence {c} is outside (0,1]")));
            }
            if t.len() != attrs.len() || t.iter().any(Value::is_bottom) {
                return Err(Error::validation(format!("malformed tuple {t:?} for {}", r.name)));
            }
            let fields = attrs.iter().map(|a| FieldId::new(&r.name, i as u32 + 1, a)).collect();
            let mut rows = vec![LocalWorld::new(t.clone(), *c)];
            if *c < 1.0 {
                rows.push(LocalWorld::new(vec![Value::Bottom; attrs.len()], 1.0 - c));
            }
            comps.push(Component::new(fields, rows)?);
        }
    }
    Wsd::new(Schema::new(schema)?, comps)
}

/// A cell of an or-set relation: alternatives with optional weights.
#[derive(Clone, Debug, PartialEq)]
pub struct OrSet {
    pub alternatives: Vec<Value>,
    pub weights: Option<Vec<f64>>,
}

impl OrSet {
    pub fn certain(v: Value) -> Self {
        OrSet { alternatives: vec![v], weights: None }
    }

    pub fn uniform(vs: Vec<Value>) -> Self {
        OrSet { alternatives: vs, weights: None }
    }

    pub fn weighted(pairs: Vec<(Value, f64)>) -> Self {
        let (alternatives, w) = pairs.into_iter().unzip();
        OrSet { alternatives, weights: Some(w) }
    }
}

/// Builds a WSD with one single-field component per field of an or-set relation.
pub fn from_orset_relation(name: &str, attrs: &[&str], rows: &[Vec<OrSet>]) -> Result<Wsd> {
    let schema = Schema::new(vec![RelationSchema::new(name, attrs, rows.len())])?;
    let mut comps = Vec::with_capacity(rows.len() * attrs.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != attrs.len() {
            return Err(Error::validation(format!("row {} has {} cells, expected {}", i + 1, row.len(), attrs.len())));
        }
        for (cell, a) in row.iter().zip(attrs) {
            comps.push(orset_component(FieldId::new(name, i as u32 + 1, a), cell)?);
        }
    }
    Wsd::new(schema, comps)
}

pub(crate) fn orset_component(field: FieldId, cell: &OrSet) -> Result<Component> {
    if cell.alternatives.is_empty() {
        return Err(Error::validation(format!("empty or-set for {field}")));
    }
    if cell.alternatives.iter().any(Value::is_bottom) {
        return Err(Error::validation(format!("or-set for {field} contains ⊥")));
    }
    let k = cell.alternatives.len();
    let weights = match &cell.weights {
        Some(w) => {
            if w.len() != k {
                return Err(Error::validation(format!("or-set for {field} has {k} values but {} weights", w.len())));
            }
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > PROB_EPS {
                return Err(Error::validation(format!("weights for {field} sum to {s}")));
            }
            w.clone()
        }
        None => vec![1.0 / k as f64; k],
    };
    let mut acc: Vec<(Value, f64)> = Vec::new();
    for (v, p) in cell.alternatives.iter().zip(weights) {
        match acc.iter_mut().find(|(u, _)| u == v) {
            Some((_, q)) => *q += p,
            None => acc.push((v.clone(), p)),
        }
    }
    Component::new(vec![field], acc.into_iter().map(|(v, p)| LocalWorld::new(vec![v], p)).collect())
}
