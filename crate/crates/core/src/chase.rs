//! Data cleaning by chasing equality-generating and denial dependencies.
//!
//! Dependency syntax, one per line, `#` starts a comment:
//!
//! ```text
//! FORALL t IN R : t.CITIZEN = 0 -> t.IMMIGR = 0
//! FORALL t, u IN R (t != u) : t.SSN = u.SSN -> FALSE
//! ```
//!
//! A step removes the local worlds that violate a dependency and
//! renormalizes; if nothing is left the database is inconsistent.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::decomposition::{compose_all, may_be_bottom, possible_values, tuple_cells, CellRef, Decomposition};
use crate::error::{Error, Result};
use crate::model::{Cid, Component, FieldId, Schema, Wsd};
use crate::value::{CmpOp, Value};

/// Which bound tuple an attribute reference uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    T,
    U,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Operand {
    Attr(Var, String),
    Const(Value),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub lhs: Operand,
    pub op: CmpOp,
    pub rhs: Operand,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DependencyKind {
    SingleTuple,
    PairDenial,
}

/// `FORALL t[, u] IN relation [(t != u)] : premise -> conclusion`.
///
/// A `conclusion` of `None` is `FALSE`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dependency {
    pub relation: String,
    pub vars: Vec<String>,
    pub distinct: bool,
    pub premise: Vec<Atom>,
    pub conclusion: Option<Atom>,
}

impl Dependency {
    pub fn kind(&self) -> DependencyKind {
        if self.vars.len() == 2 {
            DependencyKind::PairDenial
        } else {
            DependencyKind::SingleTuple
        }
    }

    fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.premise.iter().chain(self.conclusion.as_ref())
    }

    fn check(&self, schema: &Schema) -> Result<()> {
        let rs = schema.require(&self.relation)?;
        for a in self.atoms() {
            for o in [&a.lhs, &a.rhs] {
                if let Operand::Attr(v, name) = o {
                    rs.require_attr(name)?;
                    if *v == Var::U && self.vars.len() < 2 {
                        return Err(Error::schema("second tuple variable used but not bound"));
                    }
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Dependency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |v: Var| &self.vars[if v == Var::T { 0 } else { 1 }];
        let op = |o: &Operand| match o {
            Operand::Attr(v, a) => format!("{}.{a}", name(*v)),
            Operand::Const(Value::Str(s)) => format!("'{s}'"),
            Operand::Const(c) => c.to_string(),
        };
        let atom = |a: &Atom| format!("{} {} {}", op(&a.lhs), a.op, op(&a.rhs));
        write!(f, "FORALL {} IN {}", self.vars.join(", "), self.relation)?;
        if self.distinct {
            write!(f, " ({} != {})", self.vars[0], self.vars[1])?;
        }
        let prem: Vec<String> = self.premise.iter().map(atom).collect();
        write!(f, " : {} -> ", prem.join(" AND "))?;
        match &self.conclusion {
            Some(a) => f.write_str(&atom(a)),
            None => f.write_str("FALSE"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Sym(&'static str),
}

fn lex(text: &str, base: usize) -> Result<Vec<(usize, Tok)>> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c == '#' {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push((base + s, Tok::Ident(text[s..i].to_string())));
        } else if c.is_ascii_digit() || (c == '-' && b.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let s = i;
            i += 1;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            let n = text[s..i].parse().map_err(|_| Error::parse(base + s, "integer out of range"))?;
            out.push((base + s, Tok::Int(n)));
        } else if c == '\'' || c == '"' {
            let s = i;
            i += 1;
            while i < b.len() && b[i] as char != c {
                i += 1;
            }
            if i == b.len() {
                return Err(Error::parse(base + s, "unterminated string"));
            }
            out.push((base + s, Tok::Str(text[s + 1..i].to_string())));
            i += 1;
        } else {
            const SYMS: [&str; 14] = ["->", "!=", "<>", "<=", ">=", "<", ">", "=", ",", ":", "(", ")", ".", "["];
            match SYMS.iter().find(|s| text[i..].starts_with(**s)) {
                Some(s) => {
                    out.push((base + i, Tok::Sym(s)));
                    i += s.len();
                }
                None => return Err(Error::parse(base + i, format!("unexpected character '{c}'"))),
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn err(&self, msg: impl fmt::Display) -> Error {
        Error::parse(self.here(), msg)
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.keyword(kw) {
            Ok(())
        } else {
            Err(self.err(format!("expected {kw}")))
        }
    }

    fn sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<()> {
        if self.sym(s) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{s}'")))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("expected a name")),
        }
    }

    fn var(&mut self, vars: &[String]) -> Result<Var> {
        let at = self.here();
        let name = self.ident()?;
        match vars.iter().position(|v| *v == name) {
            Some(0) => Ok(Var::T),
            Some(_) => Ok(Var::U),
            None => Err(Error::parse(at, format!("unbound tuple variable {name}"))),
        }
    }

    fn operand(&mut self, vars: &[String]) -> Result<Operand> {
        match self.peek().cloned() {
            Some(Tok::Int(n)) => {
                self.pos += 1;
                Ok(Operand::Const(Value::Int(n)))
            }
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(Operand::Const(Value::str(&s)))
            }
            Some(Tok::Ident(_)) => {
                let v = self.var(vars)?;
                self.expect_sym(".")?;
                Ok(Operand::Attr(v, self.ident()?))
            }
            _ => Err(self.err("expected an attribute or a constant")),
        }
    }

    fn atom(&mut self, vars: &[String]) -> Result<Atom> {
        let lhs = self.operand(vars)?;
        let op = match self.peek() {
            Some(Tok::Sym(s)) => CmpOp::from_symbol(s).ok_or_else(|| self.err("expected a comparison"))?,
            _ => return Err(self.err("expected a comparison")),
        };
        self.pos += 1;
        let rhs = self.operand(vars)?;
        if matches!((&lhs, &rhs), (Operand::Const(_), Operand::Const(_))) {
            return Err(self.err("an atom must mention an attribute"));
        }
        Ok(Atom { lhs, op, rhs })
    }

    fn dependency(&mut self) -> Result<Dependency> {
        self.expect_keyword("FORALL")?;
        let mut vars = vec![self.ident()?];
        if self.sym(",") {
            let at = self.here();
            let u = self.ident()?;
            if u == vars[0] {
                return Err(Error::parse(at, "tuple variables must differ"));
            }
            vars.push(u);
        }
        self.expect_keyword("IN")?;
        let relation = self.ident()?;
        let mut distinct = false;
        if vars.len() == 2 && self.sym("(") {
            let a = self.var(&vars)?;
            if !self.sym("!=") && !self.sym("<>") {
                return Err(self.err("expected '!='"));
            }
            let b = self.var(&vars)?;
            if a == b {
                return Err(self.err("distinctness needs both variables"));
            }
            self.expect_sym(")")?;
            distinct = true;
        }
        self.expect_sym(":")?;
        let mut premise = vec![self.atom(&vars)?];
        while self.keyword("AND") {
            premise.push(self.atom(&vars)?);
        }
        self.expect_sym("->")?;
        let conclusion = if self.keyword("FALSE") { None } else { Some(self.atom(&vars)?) };
        if self.pos < self.toks.len() {
            return Err(self.err("unexpected trailing input"));
        }
        Ok(Dependency { relation, vars, distinct, premise, conclusion })
    }
}

fn parse_at(text: &str, base: usize) -> Result<Dependency> {
    let toks = lex(text, base)?;
    Parser { toks, pos: 0, end: base + text.len() }.dependency()
}

/// Parses a single dependency; error positions are byte offsets.
pub fn parse_dependency(text: &str) -> Result<Dependency> {
    parse_at(text, 0)
}

/// Parses a file with one dependency per non-empty line.
pub fn parse_dependencies(text: &str) -> Result<Vec<Dependency>> {
    let mut out = Vec::new();
    let mut base = 0;
    for line in text.split_inclusive('\n') {
        let body = line.split('#').next().unwrap_or("");
        if !body.trim().is_empty() {
            out.push(parse_at(line, base)?);
        }
        base += line.len();
    }
    Ok(out)
}

/// Chases until no dependency changes anything.
pub fn chase(wsd: &Wsd, deps: &[Dependency]) -> Result<Wsd> {
    let mut out = wsd.clone();
    chase_in(&mut out, deps)?;
    Ok(out)
}

pub fn chase_in<D: Decomposition + ?Sized>(d: &mut D, deps: &[Dependency]) -> Result<()> {
    for dep in deps {
        dep.check(d.schema())?;
    }
    loop {
        let mut changed = false;
        for dep in deps {
            changed |= chase_step_in(d, dep)?;
        }
        if !changed {
            return Ok(());
        }
    }
}

/// One pass of one dependency over all bindings.
pub fn chase_step(wsd: &Wsd, dep: &Dependency) -> Result<Wsd> {
    let mut out = wsd.clone();
    chase_step_in(&mut out, dep)?;
    Ok(out)
}

/// Returns whether any local world was removed.
pub fn chase_step_in<D: Decomposition + ?Sized>(d: &mut D, dep: &Dependency) -> Result<bool> {
    dep.check(d.schema())?;
    let rs = d.schema().require(&dep.relation)?.clone();
    let attr_idx = |name: &str| rs.attr_index(name).unwrap();
    let bound = BoundDep {
        premise: dep.premise.iter().map(|a| bind(a, &attr_idx)).collect(),
        conclusion: dep.conclusion.as_ref().map(|a| bind(a, &attr_idx)),
        distinct: dep.distinct,
    };
    let tids = d.tuple_ids(&dep.relation).into_owned();
    let mut changed = false;
    match dep.kind() {
        DependencyKind::SingleTuple => {
            for &t in &tids {
                changed |= apply(d, &rs.name, &bound, t, t)?;
            }
        }
        DependencyKind::PairDenial => {
            for (i, j) in candidate_pairs(d, &rs.name, &bound, &tids)? {
                changed |= apply(d, &rs.name, &bound, i, j)?;
            }
        }
    }
    Ok(changed)
}

#[derive(Clone, Debug)]
enum BOp {
    Attr(Var, usize),
    Const(Value),
}

#[derive(Clone, Debug)]
struct BAtom {
    lhs: BOp,
    op: CmpOp,
    rhs: BOp,
}

struct BoundDep {
    premise: Vec<BAtom>,
    conclusion: Option<BAtom>,
    distinct: bool,
}

impl BoundDep {
    fn atoms(&self) -> impl Iterator<Item = &BAtom> {
        self.premise.iter().chain(self.conclusion.as_ref())
    }

    /// Whether a binding with these full tuples violates the dependency.
    fn violated(&self, t: &[Value], u: &[Value], identity_check: bool) -> Result<bool> {
        if identity_check && t == u {
            return Ok(false);
        }
        let get = |o: &BOp| -> Value {
            match o {
                BOp::Attr(Var::T, i) => t[*i].clone(),
                BOp::Attr(Var::U, i) => u[*i].clone(),
                BOp::Const(v) => v.clone(),
            }
        };
        for a in &self.premise {
            if !a.op.eval(&get(&a.lhs), &get(&a.rhs))? {
                return Ok(false);
            }
        }
        match &self.conclusion {
            None => Ok(true),
            Some(a) => Ok(!a.op.eval(&get(&a.lhs), &get(&a.rhs))?),
        }
    }
}

fn bind(a: &Atom, idx: &dyn Fn(&str) -> usize) -> BAtom {
    let b = |o: &Operand| match o {
        Operand::Attr(v, n) => BOp::Attr(*v, idx(n)),
        Operand::Const(c) => BOp::Const(c.clone()),
    };
    BAtom { lhs: b(&a.lhs), op: a.op, rhs: b(&a.rhs) }
}

/// Ordered pairs worth checking. Uses the first cross-tuple equality in the premise to prune.
fn candidate_pairs<D: Decomposition + ?Sized>(
    d: &D,
    rel: &std::sync::Arc<str>,
    dep: &BoundDep,
    tids: &[u32],
) -> Result<Vec<(u32, u32)>> {
    let key = dep.premise.iter().find_map(|a| match (&a.lhs, a.op, &a.rhs) {
        (BOp::Attr(Var::T, i), CmpOp::Eq, BOp::Attr(Var::U, j)) => Some((*i, *j)),
        (BOp::Attr(Var::U, j), CmpOp::Eq, BOp::Attr(Var::T, i)) => Some((*i, *j)),
        _ => None,
    });
    let mut pairs = Vec::new();
    let self_pairs = !dep.distinct;
    let rs = d.schema().require(rel)?;
    match key {
        None => {
            for &i in tids {
                for &j in tids {
                    if i != j || self_pairs {
                        pairs.push((i, j));
                    }
                }
            }
        }
        Some((ti, uj)) => {
            let vals = |tid: u32, a: usize| -> Result<BTreeSet<Value>> {
                let f = FieldId::from_parts(rel, tid, &rs.attrs[a]);
                let cell = d.cell(&f).ok_or_else(|| Error::validation(format!("missing field {f}")))?;
                Ok(possible_values(d, &f, &cell))
            };
            let mut by_value: BTreeMap<Value, Vec<u32>> = BTreeMap::new();
            for &j in tids {
                for v in vals(j, uj)? {
                    by_value.entry(v).or_default().push(j);
                }
            }
            for &i in tids {
                let mut js = BTreeSet::new();
                for v in vals(i, ti)? {
                    if let Some(list) = by_value.get(&v) {
                        js.extend(list.iter().copied());
                    }
                }
                for j in js {
                    if i != j || self_pairs {
                        pairs.push((i, j));
                    }
                }
            }
        }
    }
    Ok(pairs)
}

/// Applies the dependency to the binding (t, u); for single-tuple dependencies t == u.
fn apply<D: Decomposition + ?Sized>(
    d: &mut D,
    rel: &std::sync::Arc<str>,
    dep: &BoundDep,
    t: u32,
    u: u32,
) -> Result<bool> {
    let rs = d.schema().require(rel)?.clone();
    let same = t == u;
    let tc = tuple_cells(d, rel, t)?;
    let uc = if same { tc.clone() } else { tuple_cells(d, rel, u)? };
    let is_bot = |c: &CellRef| matches!(c, CellRef::Const(v) if v.is_bottom());
    if tc.iter().chain(&uc).any(is_bot) {
        return Ok(false);
    }
    let cell_of = |v: Var, i: usize| if v == Var::T { &tc[i] } else { &uc[i] };
    // constant-only atoms decide early
    for a in &dep.premise {
        if let (Some(x), Some(y)) = (const_of(&a.lhs, &cell_of), const_of(&a.rhs, &cell_of)) {
            if !a.op.eval(&x, &y)? {
                return Ok(false);
            }
        }
    }
    if let Some(a) = &dep.conclusion {
        if let (Some(x), Some(y)) = (const_of(&a.lhs, &cell_of), const_of(&a.rhs, &cell_of)) {
            if a.op.eval(&x, &y)? {
                return Ok(false);
            }
        }
    }
    let field = |tid: u32, i: usize| FieldId::from_parts(&rs.name, tid, &rs.attrs[i]);
    let mut cids: BTreeSet<Cid> = BTreeSet::new();
    for a in dep.atoms() {
        for o in [&a.lhs, &a.rhs] {
            if let BOp::Attr(v, i) = o {
                if let CellRef::Var(k) = cell_of(*v, *i) {
                    cids.insert(*k);
                }
            }
        }
    }
    let sides: &[(u32, &Vec<CellRef>)] = if same { &[(t, &tc)] } else { &[(t, &tc), (u, &uc)] };
    for (tid, cells) in sides {
        for (i, c) in cells.iter().enumerate() {
            if let CellRef::Var(k) = c {
                if may_be_bottom(d, &field(*tid, i), c) {
                    cids.insert(*k);
                }
            }
        }
    }
    let identity_check = dep.distinct && !same && !certainly_distinct(d, &rs.name, t, &tc, u, &uc, &rs.attrs);
    if identity_check {
        for (_, cells) in sides {
            for c in cells.iter() {
                if let CellRef::Var(k) = c {
                    cids.insert(*k);
                }
            }
        }
    }
    // unmentioned variable cells are never read here
    let full = |cells: &[CellRef]| -> Vec<Value> {
        cells
            .iter()
            .map(|c| match c {
                CellRef::Const(v) => v.clone(),
                CellRef::Var(_) => Value::Bottom,
            })
            .collect()
    };
    if cids.is_empty() {
        let (tv, uv) = (full(&tc), full(&uc));
        if dep.violated(&tv, &uv, identity_check)? {
            return Err(Error::Inconsistent(format!("{}.t{t} violates a dependency in every world", rs.name)));
        }
        return Ok(false);
    }
    let comp = compose_all(&*d, &cids)?;
    // per attribute: component column or constant
    let locate = |tid: u32, cells: &[CellRef]| -> Vec<Result<usize, Value>> {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| match c {
                CellRef::Var(k) if cids.contains(k) => Ok(comp.col(&field(tid, i)).unwrap()),
                // never read: not mentioned, never ⊥, and no identity check needed
                CellRef::Var(_) => Err(Value::Bottom),
                CellRef::Const(v) => Err(v.clone()),
            })
            .collect()
    };
    let tl = locate(t, &tc);
    let ul = if same { tl.clone() } else { locate(u, &uc) };
    let mut keep = Vec::with_capacity(comp.len());
    let mut removed = false;
    for r in &comp.rows {
        let row = |loc: &[Result<usize, Value>]| -> Vec<Value> {
            loc.iter()
                .map(|l| match l {
                    Ok(i) => r.values[*i].clone(),
                    Err(v) => v.clone(),
                })
                .collect()
        };
        let (tv, uv) = (row(&tl), row(&ul));
        let present = |loc: &[Result<usize, Value>], vals: &[Value]| {
            loc.iter().zip(vals).all(|(l, v)| !(l.is_ok() && v.is_bottom()))
        };
        let violated = present(&tl, &tv) && present(&ul, &uv) && dep.violated(&tv, &uv, identity_check)?;
        keep.push(!violated);
        removed |= violated;
    }
    if !removed {
        return Ok(false);
    }
    if !keep.iter().any(|k| *k) {
        return Err(Error::Inconsistent(format!("dependency on {}.t{t} cannot be satisfied", rs.name)));
    }
    let rows = comp.rows.iter().zip(&keep).filter(|(_, k)| **k).map(|(r, _)| r.clone()).collect();
    let mut next = Component { fields: comp.fields.clone(), rows };
    next.renormalize();
    let old: Vec<Cid> = cids.into_iter().collect();
    d.replace_components(&old, next)?;
    Ok(true)
}

fn const_of<'a>(o: &BOp, cell_of: &dyn Fn(Var, usize) -> &'a CellRef) -> Option<Value> {
    match o {
        BOp::Const(v) => Some(v.clone()),
        BOp::Attr(v, i) => match cell_of(*v, *i) {
            CellRef::Const(x) => Some(x.clone()),
            CellRef::Var(_) => None,
        },
    }
}

/// True when the two tuples can never carry identical values.
fn certainly_distinct<D: Decomposition + ?Sized>(
    d: &D,
    rel: &std::sync::Arc<str>,
    t: u32,
    tc: &[CellRef],
    u: u32,
    uc: &[CellRef],
    attrs: &[std::sync::Arc<str>],
) -> bool {
    attrs.iter().enumerate().any(|(i, a)| {
        let a_vals = possible_values(d, &FieldId::from_parts(rel, t, a), &tc[i]);
        let b_vals = possible_values(d, &FieldId::from_parts(rel, u, a), &uc[i]);
        a_vals.is_disjoint(&b_vals)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_forms() {
        let d = parse_dependency("FORALL t IN R : t.A = 1 AND t.B >= 'x' -> t.C != 2").unwrap();
        assert_eq!(d.kind(), DependencyKind::SingleTuple);
        assert_eq!(d.premise.len(), 2);
        let d = parse_dependency("forall t, u in R (t != u) : t.S = u.S -> false").unwrap();
        assert_eq!(d.kind(), DependencyKind::PairDenial);
        assert!(d.distinct && d.conclusion.is_none());
        assert_eq!(parse_dependency(&d.to_string()).unwrap(), d);
    }

    #[test]
    fn errors_carry_positions() {
        match parse_dependency("FORALL t IN R : t.A = -> FALSE") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 22),
            other => panic!("{other:?}"),
        }
        match parse_dependency("FORALL t IN R : x.A = 1 -> FALSE") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 16),
            other => panic!("{other:?}"),
        }
        let text = "FORALL t IN R : t.A = 1 -> FALSE\n\n# note\nFORALL t IN R t.A = 1 -> FALSE\n";
        match parse_dependencies(text) {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, text.find("R t.A").unwrap() + 2),
            other => panic!("{other:?}"),
        }
    }
}
