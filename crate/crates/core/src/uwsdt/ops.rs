//! Relational operators evaluated directly on the UWSDT tables.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{Cell, Uwsdt};
use crate::algebra::Condition;
use crate::error::{Error, Result};
use crate::model::{Cid, FieldId, RelationSchema};
use crate::value::{CmpOp, Value};

/// `P := σ[A θ c](R)` in six steps.
///
/// 1. Keep template rows whose `A` is a placeholder or a constant satisfying the condition.
/// 2. Map the kept placeholders of P to the components of their R counterparts.
/// 3. Copy their C values, writing ⊥ for `A` values that fail the condition.
/// 4. Within a component, ⊥ in one field of a tuple makes its other fields ⊥.
/// 5. Remove F entries of fields that are ⊥ in every local world.
/// 6. Remove template rows that lost a placeholder's F entry, with their other fields.
pub fn select_const_uwsdt(u: &mut Uwsdt, r: &str, attr: &str, op: CmpOp, c: &Value, p: &str) -> Result<()> {
    let rs = u.schema.require(r)?.clone();
    let ai = rs.require_attr(attr)?;
    let pname = u.add_relation(p, rs.attrs.clone())?;
    let src = u.templates[&rs.name].clone();
    let mut p0 = Vec::new();
    for (tid, cells) in src.rows() {
        if let Cell::Const(v) = &cells[ai] {
            if !op.eval(v, c)? {
                continue;
            }
        }
        p0.push((*tid, cells));
    }
    for (tid, cells) in &p0 {
        for (a, cell) in rs.attrs.iter().zip(cells.iter()) {
            if *cell == Cell::Placeholder {
                let to = FieldId::from_parts(&pname, *tid, a);
                u.copy_field(&FieldId::from_parts(&rs.name, *tid, a), to.clone());
                if **a == *attr {
                    for v in u.c.get_mut(&to).unwrap() {
                        if !v.is_bottom() && !op.eval(v, c)? {
                            *v = Value::Bottom;
                        }
                    }
                }
            }
        }
        u.push_row(&pname, *tid, cells.to_vec());
    }
    for (tid, _) in &p0 {
        u.propagate_tuple(&pname, *tid);
    }
    let mut lost = BTreeSet::new();
    for (tid, _) in &p0 {
        for f in u.placeholders(&pname, *tid) {
            if u.c[&f].iter().all(Value::is_bottom) {
                u.remove_field(&f);
                lost.insert(*tid);
            }
        }
    }
    u.remove_tuples(p, &lost);
    u.sync_cards();
    Ok(())
}

/// A condition with attribute names resolved to positions.
#[derive(Clone, Debug)]
enum Bound {
    Const(usize, CmpOp, Value),
    Attrs(usize, CmpOp, usize),
}

fn bind(rs: &RelationSchema, conds: &[Condition]) -> Result<Vec<Bound>> {
    conds
        .iter()
        .map(|c| {
            Ok(match c {
                Condition::AttrConst(a, op, v) => Bound::Const(rs.require_attr(a)?, *op, v.clone()),
                Condition::AttrAttr(a, op, b) => Bound::Attrs(rs.require_attr(a)?, *op, rs.require_attr(b)?),
            })
        })
        .collect()
}

/// Evaluates the conditions whose operands are all template constants.
fn constants_pass(cells: &[Cell], conds: &[Bound]) -> Result<bool> {
    for c in conds {
        let ok = match c {
            Bound::Const(i, op, v) => match &cells[*i] {
                Cell::Const(x) => op.eval(x, v)?,
                Cell::Placeholder => true,
            },
            Bound::Attrs(i, op, j) => match (&cells[*i], &cells[*j]) {
                (Cell::Const(x), Cell::Const(y)) => op.eval(x, y)?,
                _ => true,
            },
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

impl Uwsdt {
    fn propagate_tuple(&mut self, rel: &Arc<str>, tid: u32) {
        let mut by_cid: BTreeMap<Cid, Vec<FieldId>> = BTreeMap::new();
        for f in self.placeholders(rel, tid) {
            by_cid.entry(self.f[&f]).or_default().push(f);
        }
        for g in by_cid.values().filter(|g| g.len() > 1) {
            self.propagate_group(g);
        }
    }

    /// Sets every field of the tuple in component `cid` to ⊥ at the given local worlds.
    fn kill(&mut self, rel: &Arc<str>, tid: u32, cid: Cid, lwids: &[usize]) {
        if lwids.is_empty() {
            return;
        }
        let fields: Vec<FieldId> =
            self.members[&cid].iter().filter(|f| f.rel == *rel && f.tid == tid).cloned().collect();
        for f in fields {
            let col = self.c.get_mut(&f).unwrap();
            for &k in lwids {
                col[k] = Value::Bottom;
            }
        }
    }

    /// Copies a tuple's cells into `p`; `cols` picks source attributes in target order.
    fn copy_tuple(
        &mut self,
        r: &RelationSchema,
        tid: u32,
        cols: &[usize],
        p: &Arc<str>,
        ptid: u32,
        pattrs: &[Arc<str>],
    ) {
        let sources: Vec<(&RelationSchema, u32, usize)> = cols.iter().map(|&i| (r, tid, i)).collect();
        self.copy_cells(&sources, p, ptid, pattrs);
    }

    /// Builds row `ptid` of `p` from `(relation, tuple, column)` sources.
    fn copy_cells(&mut self, sources: &[(&RelationSchema, u32, usize)], p: &Arc<str>, ptid: u32, pattrs: &[Arc<str>]) {
        let mut out = Vec::with_capacity(sources.len());
        for (&(r, tid, i), pa) in sources.iter().zip(pattrs) {
            let cell = self.templates[&r.name].get(tid).unwrap()[i].clone();
            if cell == Cell::Placeholder {
                self.copy_field(&FieldId::from_parts(&r.name, tid, &r.attrs[i]), FieldId::from_parts(p, ptid, pa));
            }
            out.push(cell);
        }
        self.push_row(p, ptid, out);
    }

    /// Applies a conjunction to one tuple in place. Returns false if the tuple can no longer occur.
    fn filter_tuple(&mut self, p: &Arc<str>, tid: u32, conds: &[Bound]) -> Result<bool> {
        let attrs = self.schema.require(p)?.attrs.clone();
        let fid = |i: usize| FieldId::from_parts(p, tid, &attrs[i]);
        for cond in conds {
            let cells = self.templates[p].get(tid).unwrap();
            let (i, op, rhs) = match cond {
                Bound::Const(i, op, v) => (*i, *op, Err(v.clone())),
                Bound::Attrs(i, op, j) => (*i, *op, Ok(*j)),
            };
            let rhs = match rhs {
                Ok(j) => match &cells[j] {
                    Cell::Const(v) => Err(v.clone()),
                    Cell::Placeholder => Ok(j),
                },
                Err(v) => Err(v),
            };
            match (&cells[i], rhs) {
                (Cell::Const(x), Err(y)) => {
                    if !op.eval(x, &y)? {
                        return Ok(false);
                    }
                }
                (Cell::Placeholder, Err(y)) => {
                    let f = fid(i);
                    let cid = self.f[&f];
                    let col = &self.c[&f];
                    let mut bad = Vec::new();
                    for (k, v) in col.iter().enumerate() {
                        if !v.is_bottom() && !op.eval(v, &y)? {
                            bad.push(k);
                        }
                    }
                    self.kill(p, tid, cid, &bad);
                }
                (Cell::Const(x), Ok(j)) => {
                    let f = fid(j);
                    let cid = self.f[&f];
                    let col = &self.c[&f];
                    let mut bad = Vec::new();
                    for (k, v) in col.iter().enumerate() {
                        if !v.is_bottom() && !op.eval(x, v)? {
                            bad.push(k);
                        }
                    }
                    self.kill(p, tid, cid, &bad);
                }
                (Cell::Placeholder, Ok(j)) => {
                    let (fa, fb) = (fid(i), fid(j));
                    let cid = self.merge(&[self.f[&fa], self.f[&fb]])?;
                    let (ca, cb) = (&self.c[&fa], &self.c[&fb]);
                    let mut bad = Vec::new();
                    for k in 0..ca.len() {
                        if !ca[k].is_bottom() && !op.eval(&ca[k], &cb[k])? {
                            bad.push(k);
                        }
                    }
                    self.kill(p, tid, cid, &bad);
                }
            }
        }
        Ok(!self.is_invalid(p, tid))
    }

    /// `P := σ[c1 ∧ … ∧ cn](R)` in one pass.
    pub fn select(&mut self, r: &str, conds: &[Condition], p: &str) -> Result<()> {
        let rs = self.schema.require(r)?.clone();
        let bound = bind(&rs, conds)?;
        let pname = self.add_relation(p, rs.attrs.clone())?;
        let src = self.templates[&rs.name].clone();
        let cols: Vec<usize> = (0..rs.arity()).collect();
        for (tid, cells) in src.rows() {
            if !constants_pass(cells, &bound)? {
                continue;
            }
            self.copy_tuple(&rs, *tid, &cols, &pname, *tid, &rs.attrs);
            if !self.filter_tuple(&pname, *tid, &bound)? {
                self.remove_tuples(p, &[*tid].into());
            }
        }
        self.sync_cards();
        Ok(())
    }

    /// `P := π[U](R)`.
    pub fn project(&mut self, r: &str, attrs: &[&str], p: &str) -> Result<()> {
        let rs = self.schema.require(r)?.clone();
        if attrs.is_empty() {
            return Err(Error::schema("projection needs at least one attribute"));
        }
        let mut cols = Vec::new();
        for a in attrs {
            let i = rs.require_attr(a)?;
            if cols.contains(&i) {
                return Err(Error::schema(format!("attribute {a} listed twice")));
            }
            cols.push(i);
        }
        let pattrs: Vec<Arc<str>> = cols.iter().map(|&i| rs.attrs[i].clone()).collect();
        let pname = self.add_relation(p, pattrs.clone())?;
        let src = self.templates[&rs.name].clone();
        for (tid, cells) in src.rows() {
            self.copy_tuple(&rs, *tid, &cols, &pname, *tid, &pattrs);
            // components that decide whether the tuple exists but hold no kept field
            let kept_cids: BTreeSet<Cid> = self.placeholders(&pname, *tid).iter().map(|f| self.f[f]).collect();
            let mut guards: BTreeMap<Cid, FieldId> = BTreeMap::new();
            for (i, cell) in cells.iter().enumerate() {
                if cols.contains(&i) || *cell != Cell::Placeholder {
                    continue;
                }
                let f = FieldId::from_parts(&rs.name, *tid, &rs.attrs[i]);
                let cid = self.f[&f];
                if !kept_cids.contains(&cid) && self.c[&f].iter().any(Value::is_bottom) {
                    guards.entry(cid).or_insert(f);
                }
            }
            let mut guards: Vec<(usize, Cid, FieldId)> =
                guards.into_iter().map(|(cid, f)| (self.w[&cid].len(), cid, f)).collect();
            guards.sort();
            for (_, e, guard) in guards {
                let held = self.placeholders(&pname, *tid);
                let cid = match held.iter().map(|f| (self.w[&self.f[f]].len(), self.f[f])).min() {
                    Some((_, k)) => self.merge(&[k, e])?,
                    None => {
                        // the projected tuple is all constants: tie its first value to the guard
                        let v = match &self.templates[&pname].get(*tid).unwrap()[0] {
                            Cell::Const(v) => v.clone(),
                            Cell::Placeholder => unreachable!(),
                        };
                        self.template_mut(&pname).get_mut(*tid).unwrap()[0] = Cell::Placeholder;
                        let col = self.c[&guard]
                            .iter()
                            .map(|g| if g.is_bottom() { Value::Bottom } else { v.clone() })
                            .collect();
                        self.add_field(FieldId::from_parts(&pname, *tid, &pattrs[0]), e, col);
                        continue;
                    }
                };
                let dead: Vec<usize> =
                    self.c[&guard].iter().enumerate().filter(|(_, v)| v.is_bottom()).map(|(k, _)| k).collect();
                self.kill(&pname, *tid, cid, &dead);
            }
        }
        self.sync_cards();
        Ok(())
    }

    /// `T := R × S`.
    pub fn product(&mut self, r: &str, s: &str, t: &str) -> Result<()> {
        self.join(r, s, &[], t)
    }

    /// `T := σ[conds](R × S)` without materializing pairs that certainly fail
    /// the first equality between an R and an S attribute.
    pub fn join(&mut self, r: &str, s: &str, conds: &[Condition], t: &str) -> Result<()> {
        let rs = self.schema.require(r)?.clone();
        let ss = self.schema.require(s)?.clone();
        if let Some(a) = rs.attrs.iter().find(|a| ss.attrs.contains(a)) {
            return Err(Error::schema(format!("{r} and {s} share attribute {a}")));
        }
        let mut attrs = rs.attrs.clone();
        attrs.extend(ss.attrs.iter().cloned());
        let tschema = RelationSchema { name: Arc::from(t), attrs: attrs.clone(), max_card: 0 };
        let bound = bind(&tschema, conds)?;
        let tname = self.add_relation(t, attrs.clone())?;
        let (rt, st) = (self.templates[&rs.name].clone(), self.templates[&ss.name].clone());
        let n = st.len() as u32;
        let ra = rs.arity();
        let key = bound.iter().find_map(|b| match b {
            Bound::Attrs(i, CmpOp::Eq, j) if *i < ra && *j >= ra => Some((*i, *j - ra)),
            Bound::Attrs(j, CmpOp::Eq, i) if *i < ra && *j >= ra => Some((*i, *j - ra)),
            _ => None,
        });
        let pairs: Vec<(usize, usize)> = match key {
            None => (0..rt.len()).flat_map(|i| (0..st.len()).map(move |j| (i, j))).collect(),
            Some((ri, sj)) => {
                let mut by_value: BTreeMap<Value, Vec<usize>> = BTreeMap::new();
                for (j, (tid, _)) in st.rows().iter().enumerate() {
                    for v in self.possible(&ss, *tid, sj) {
                        by_value.entry(v).or_default().push(j);
                    }
                }
                let mut out = Vec::new();
                for (i, (tid, _)) in rt.rows().iter().enumerate() {
                    let mut js = BTreeSet::new();
                    for v in self.possible(&rs, *tid, ri) {
                        if let Some(l) = by_value.get(&v) {
                            js.extend(l.iter().copied());
                        }
                    }
                    out.extend(js.into_iter().map(|j| (i, j)));
                }
                out
            }
        };
        let rcols: Vec<usize> = (0..ra).collect();
        let scols: Vec<usize> = (0..ss.arity()).collect();
        for (i, j) in pairs {
            let (ti, rcells) = &rt.rows()[i];
            let (tj, scells) = &st.rows()[j];
            let mut both = rcells.clone();
            both.extend(scells.iter().cloned());
            if !constants_pass(&both, &bound)? {
                continue;
            }
            let slot = i as u32 * n + j as u32 + 1;
            let sources: Vec<(&RelationSchema, u32, usize)> =
                rcols.iter().map(|&k| (&rs, *ti, k)).chain(scols.iter().map(|&k| (&ss, *tj, k))).collect();
            self.copy_cells(&sources, &tname, slot, &attrs);
            self.propagate_tuple(&tname, slot);
            if !self.filter_tuple(&tname, slot, &bound)? {
                self.remove_tuples(t, &[slot].into());
            }
        }
        self.sync_cards();
        Ok(())
    }

    fn possible(&self, rs: &RelationSchema, tid: u32, i: usize) -> BTreeSet<Value> {
        match &self.templates[&rs.name].get(tid).unwrap()[i] {
            Cell::Const(v) => [v.clone()].into(),
            Cell::Placeholder => self.c[&FieldId::from_parts(&rs.name, tid, &rs.attrs[i])]
                .iter()
                .filter(|v| !v.is_bottom())
                .cloned()
                .collect(),
        }
    }

    fn union_compatible(&self, r: &RelationSchema, s: &RelationSchema) -> Result<Vec<usize>> {
        let a: BTreeSet<_> = r.attrs.iter().collect();
        let b: BTreeSet<_> = s.attrs.iter().collect();
        if a != b {
            return Err(Error::schema(format!("{} and {} have different attributes", r.name, s.name)));
        }
        Ok(r.attrs.iter().map(|x| s.attr_index(x).unwrap()).collect())
    }

    /// `T := R ∪ S`; R's tuples come first.
    pub fn union(&mut self, r: &str, s: &str, t: &str) -> Result<()> {
        let rs = self.schema.require(r)?.clone();
        let ss = self.schema.require(s)?.clone();
        let scols = self.union_compatible(&rs, &ss)?;
        let tname = self.add_relation(t, rs.attrs.clone())?;
        let (rt, st) = (self.templates[&rs.name].clone(), self.templates[&ss.name].clone());
        let rcols: Vec<usize> = (0..rs.arity()).collect();
        for (k, (tid, _)) in rt.rows().iter().enumerate() {
            self.copy_tuple(&rs, *tid, &rcols, &tname, k as u32 + 1, &rs.attrs);
        }
        for (k, (tid, _)) in st.rows().iter().enumerate() {
            self.copy_tuple(&ss, *tid, &scols, &tname, (rt.len() + k) as u32 + 1, &rs.attrs);
        }
        self.sync_cards();
        Ok(())
    }

    /// `P := R − S`.
    pub fn difference(&mut self, r: &str, s: &str, p: &str) -> Result<()> {
        let rs = self.schema.require(r)?.clone();
        let ss = self.schema.require(s)?.clone();
        let scols = self.union_compatible(&rs, &ss)?;
        let pname = self.add_relation(p, rs.attrs.clone())?;
        let (rt, st) = (self.templates[&rs.name].clone(), self.templates[&ss.name].clone());
        let cols: Vec<usize> = (0..rs.arity()).collect();
        let mut by_value: BTreeMap<Value, Vec<u32>> = BTreeMap::new();
        for (tj, _) in st.rows() {
            for v in self.possible(&ss, *tj, scols[0]) {
                by_value.entry(v).or_default().push(*tj);
            }
        }
        let prs = self.schema.require(p)?.clone();
        let mut gone = BTreeSet::new();
        'tuples: for (ti, _) in rt.rows() {
            self.copy_tuple(&rs, *ti, &cols, &pname, *ti, &rs.attrs);
            let mut cands = BTreeSet::new();
            for v in self.possible(&rs, *ti, 0) {
                if let Some(l) = by_value.get(&v) {
                    cands.extend(l.iter().copied());
                }
            }
            for tj in cands {
                let disjoint =
                    (0..rs.arity()).any(|k| self.possible(&prs, *ti, k).is_disjoint(&self.possible(&ss, tj, scols[k])));
                if disjoint {
                    continue;
                }
                let pcells = self.templates[&pname].get(*ti).unwrap().to_vec();
                let scells = st.get(tj).unwrap();
                let sfields: Vec<Option<FieldId>> = scols
                    .iter()
                    .map(|&k| (scells[k] == Cell::Placeholder).then(|| FieldId::from_parts(&ss.name, tj, &ss.attrs[k])))
                    .collect();
                let pfields: Vec<Option<FieldId>> = pcells
                    .iter()
                    .zip(&rs.attrs)
                    .map(|(c, a)| (*c == Cell::Placeholder).then(|| FieldId::from_parts(&pname, *ti, a)))
                    .collect();
                let cids: Vec<Cid> = pfields.iter().chain(&sfields).flatten().map(|f| self.f[f]).collect();
                if cids.is_empty() {
                    // both certain and, not being disjoint, equal
                    gone.insert(*ti);
                    continue 'tuples;
                }
                let cid = self.merge(&cids)?;
                if pfields.iter().all(Option::is_none) {
                    let v = match &pcells[0] {
                        Cell::Const(v) => v.clone(),
                        Cell::Placeholder => unreachable!(),
                    };
                    self.template_mut(&pname).get_mut(*ti).unwrap()[0] = Cell::Placeholder;
                    let n = self.w[&cid].len();
                    self.add_field(FieldId::from_parts(&pname, *ti, &rs.attrs[0]), cid, vec![v; n]);
                }
                let n = self.w[&cid].len();
                let value = |u: &Uwsdt, f: &Option<FieldId>, cell: &Cell, k: usize| match (f, cell) {
                    (Some(f), _) => u.c[f][k].clone(),
                    (None, Cell::Const(v)) => v.clone(),
                    (None, Cell::Placeholder) => unreachable!(),
                };
                let pcells = self.templates[&pname].get(*ti).unwrap().to_vec();
                let pfields: Vec<Option<FieldId>> = pcells
                    .iter()
                    .zip(&rs.attrs)
                    .map(|(c, a)| (*c == Cell::Placeholder).then(|| FieldId::from_parts(&pname, *ti, a)))
                    .collect();
                let mut equal_at = Vec::new();
                for k in 0..n {
                    let mut eq = true;
                    for x in 0..rs.arity() {
                        let a = value(self, &pfields[x], &pcells[x], k);
                        let b = value(self, &sfields[x], &scells[scols[x]], k);
                        if !CmpOp::Eq.eval(&a, &b)? {
                            eq = false;
                            break;
                        }
                    }
                    if eq {
                        equal_at.push(k);
                    }
                }
                self.kill(&pname, *ti, cid, &equal_at);
            }
            if self.is_invalid(&pname, *ti) {
                gone.insert(*ti);
            }
        }
        self.remove_tuples(p, &gone);
        self.sync_cards();
        Ok(())
    }

    /// `P := δ[A → B](R)` as a renamed copy.
    pub fn rename(&mut self, r: &str, from: &str, to: &str, p: &str) -> Result<()> {
        let rs = self.schema.require(r)?.clone();
        let i = rs.require_attr(from)?;
        if rs.attr_index(to).is_some() {
            return Err(Error::schema(format!("{r} already has attribute {to}")));
        }
        let mut attrs = rs.attrs.clone();
        attrs[i] = Arc::from(to);
        let pname = self.add_relation(p, attrs.clone())?;
        let src = self.templates[&rs.name].clone();
        let cols: Vec<usize> = (0..rs.arity()).collect();
        for (tid, _) in src.rows() {
            self.copy_tuple(&rs, *tid, &cols, &pname, *tid, &attrs);
        }
        self.sync_cards();
        Ok(())
    }

    /// `P := R` in every world.
    pub fn copy(&mut self, r: &str, p: &str) -> Result<()> {
        let rs = self.schema.require(r)?.clone();
        let pname = self.add_relation(p, rs.attrs.clone())?;
        let src = self.templates[&rs.name].clone();
        let cols: Vec<usize> = (0..rs.arity()).collect();
        for (tid, _) in src.rows() {
            self.copy_tuple(&rs, *tid, &cols, &pname, *tid, &rs.attrs);
        }
        self.sync_cards();
        Ok(())
    }
}
