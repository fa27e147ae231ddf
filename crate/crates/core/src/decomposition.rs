//! The view shared by WSDs and UWSDTs, so confidence and chase are written once.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{Cid, Component, FieldId, Schema, Wsd, COMPONENT_CAP};
use crate::value::Value;

/// What a field holds: the same value in every world, or a component column.
#[derive(Clone, Debug, PartialEq)]
pub enum CellRef {
    Const(Value),
    Var(Cid),
}

/// Local-world probabilities by component id (the W table).
pub trait Weights {
    fn weights(&self, cid: Cid) -> Option<Cow<'_, [f64]>>;
}

impl Weights for BTreeMap<Cid, Vec<f64>> {
    fn weights(&self, cid: Cid) -> Option<Cow<'_, [f64]>> {
        self.get(&cid).map(|v| Cow::Borrowed(v.as_slice()))
    }
}

pub trait Decomposition: Weights {
    fn schema(&self) -> &Schema;
    fn tuple_ids(&self, rel: &str) -> Cow<'_, [u32]>;
    fn cell(&self, f: &FieldId) -> Option<CellRef>;
    fn component(&self, cid: Cid) -> Option<Cow<'_, Component>>;
    /// Replaces the components `old` by `new`, which must hold exactly their fields.
    fn replace_components(&mut self, old: &[Cid], new: Component) -> Result<Cid>;
}

impl Weights for Wsd {
    fn weights(&self, cid: Cid) -> Option<Cow<'_, [f64]>> {
        self.component(cid).map(|c| Cow::Owned(c.rows.iter().map(|r| r.pr).collect()))
    }
}

impl Decomposition for Wsd {
    fn schema(&self) -> &Schema {
        Wsd::schema(self)
    }

    fn tuple_ids(&self, rel: &str) -> Cow<'_, [u32]> {
        Cow::Borrowed(self.tids(rel))
    }

    fn cell(&self, f: &FieldId) -> Option<CellRef> {
        let cid = self.cid_of(f)?;
        let c = Wsd::component(self, cid)?;
        Some(if c.len() == 1 { CellRef::Const(c.rows[0].values[c.col(f)?].clone()) } else { CellRef::Var(cid) })
    }

    fn component(&self, cid: Cid) -> Option<Cow<'_, Component>> {
        Wsd::component(self, cid).map(Cow::Borrowed)
    }

    fn replace_components(&mut self, old: &[Cid], new: Component) -> Result<Cid> {
        check_same_fields(old.iter().map(|c| Wsd::component(self, *c)), &new)?;
        Ok(self.replace(old, new))
    }
}

pub(crate) fn check_same_fields<'a>(old: impl Iterator<Item = Option<&'a Component>>, new: &Component) -> Result<()> {
    let mut have = BTreeSet::new();
    for c in old {
        let c = c.ok_or_else(|| Error::validation("unknown component id"))?;
        have.extend(c.fields.iter());
    }
    let want: BTreeSet<_> = new.fields.iter().collect();
    if have != want {
        return Err(Error::validation("replacement component must cover exactly the replaced fields"));
    }
    Ok(())
}

/// Composes the given components (in ascending id order) and propagates ⊥.
pub fn compose_all<D: Decomposition + ?Sized>(d: &D, cids: &BTreeSet<Cid>) -> Result<Component> {
    let mut it = cids.iter();
    let first = it.next().ok_or_else(|| Error::validation("nothing to compose"))?;
    let mut acc = d.component(*first).unwrap().into_owned();
    for cid in it {
        acc = acc.compose(&d.component(*cid).unwrap())?;
    }
    acc.propagate_bottom();
    Ok(acc)
}

/// Visits every combination of local worlds of `comps`, passing the chosen row indices.
pub(crate) fn for_each_combination(
    comps: &[Cow<'_, Component>],
    mut f: impl FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    let total = comps.iter().fold(1usize, |a, c| a.saturating_mul(c.len()));
    if total > COMPONENT_CAP {
        return Err(Error::resource(format!("{total} local-world combinations exceed the cap")));
    }
    let mut choice = vec![0usize; comps.len()];
    loop {
        f(&choice)?;
        let mut i = 0;
        loop {
            if i == comps.len() {
                return Ok(());
            }
            choice[i] += 1;
            if choice[i] < comps[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// The cells of one tuple, in attribute order.
pub fn tuple_cells<D: Decomposition + ?Sized>(d: &D, rel: &str, tid: u32) -> Result<Vec<CellRef>> {
    let rs = d.schema().require(rel)?;
    rs.attrs
        .iter()
        .map(|a| {
            let f = FieldId::from_parts(&rs.name, tid, a);
            d.cell(&f).ok_or_else(|| Error::validation(format!("missing field {f}")))
        })
        .collect()
}

/// Non-⊥ values a field can take.
pub fn possible_values<D: Decomposition + ?Sized>(d: &D, f: &FieldId, cell: &CellRef) -> BTreeSet<Value> {
    match cell {
        CellRef::Const(v) if v.is_bottom() => BTreeSet::new(),
        CellRef::Const(v) => [v.clone()].into_iter().collect(),
        CellRef::Var(cid) => {
            let c = d.component(*cid).unwrap();
            let i = c.col(f).unwrap();
            c.column(i).filter(|v| !v.is_bottom()).cloned().collect()
        }
    }
}

/// Whether a field's column contains ⊥ in some local world.
pub fn may_be_bottom<D: Decomposition + ?Sized>(d: &D, f: &FieldId, cell: &CellRef) -> bool {
    match cell {
        CellRef::Const(v) => v.is_bottom(),
        CellRef::Var(cid) => {
            let c = d.component(*cid).unwrap();
            let i = c.col(f).unwrap();
            let found = c.column(i).any(Value::is_bottom);
            found
        }
    }
}
