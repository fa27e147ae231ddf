//! A small functional query language over the relational algebra.
//!
//! ```text
//! project(select(R, CITIZEN != 0 and ENGLISH > 3), [POWSTATE, CITIZEN, IMMIGR])
//! union(select(R, A = 1), rename(S, B -> A))
//! conf(project(R, [S]), (185))
//! ```

use std::collections::BTreeSet;
use std::fmt;

use crate::algebra::{self, Condition};
use crate::error::{Error, Result};
use crate::model::{Schema, Tuple, Wsd};
use crate::uwsdt::{rewrite_query, Uwsdt};
use crate::value::{CmpOp, Value};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Rel(String),
    Select(Box<Expr>, Vec<Condition>),
    Project(Box<Expr>, Vec<String>),
    Product(Box<Expr>, Box<Expr>),
    Union(Box<Expr>, Box<Expr>),
    Diff(Box<Expr>, Box<Expr>),
    Rename(Box<Expr>, String, String),
}

/// A relation-valued expression or one of the terminal commands.
#[derive(Clone, Debug, PartialEq)]
pub enum Query {
    Expr(Expr),
    Possible(Expr),
    Conf(Expr, Tuple),
}

impl Query {
    pub fn expr(&self) -> &Expr {
        match self {
            Query::Expr(e) | Query::Possible(e) | Query::Conf(e, _) => e,
        }
    }
}

impl Expr {
    /// Result attributes, checking every name against the schema.
    pub fn attrs(&self, schema: &Schema) -> Result<Vec<String>> {
        Ok(match self {
            Expr::Rel(r) => schema.require(r)?.attrs.iter().map(|a| a.to_string()).collect(),
            Expr::Select(e, conds) => {
                let attrs = e.attrs(schema)?;
                for c in conds {
                    let names = match c {
                        Condition::AttrConst(a, _, _) => vec![a],
                        Condition::AttrAttr(a, _, b) => vec![a, b],
                    };
                    for n in names {
                        if !attrs.contains(n) {
                            return Err(Error::schema(format!("unknown attribute {n}")));
                        }
                    }
                }
                attrs
            }
            Expr::Project(e, keep) => {
                let attrs = e.attrs(schema)?;
                if keep.is_empty() {
                    return Err(Error::schema("projection needs at least one attribute"));
                }
                let mut seen = BTreeSet::new();
                for a in keep {
                    if !attrs.contains(a) {
                        return Err(Error::schema(format!("unknown attribute {a}")));
                    }
                    if !seen.insert(a) {
                        return Err(Error::schema(format!("attribute {a} listed twice")));
                    }
                }
                keep.clone()
            }
            Expr::Product(l, r) => {
                let mut a = l.attrs(schema)?;
                let b = r.attrs(schema)?;
                if let Some(x) = a.iter().find(|x| b.contains(x)) {
                    return Err(Error::schema(format!("product operands share attribute {x}")));
                }
                a.extend(b);
                a
            }
            Expr::Union(l, r) | Expr::Diff(l, r) => {
                let a = l.attrs(schema)?;
                let b = r.attrs(schema)?;
                let (x, y): (BTreeSet<_>, BTreeSet<_>) = (a.iter().collect(), b.iter().collect());
                if x != y {
                    return Err(Error::schema("operands have different attributes"));
                }
                a
            }
            Expr::Rename(e, from, to) => {
                let mut a = e.attrs(schema)?;
                let i = a
                    .iter()
                    .position(|x| x == from)
                    .ok_or_else(|| Error::schema(format!("unknown attribute {from}")))?;
                if a.contains(to) {
                    return Err(Error::schema(format!("attribute {to} already exists")));
                }
                a[i] = to.clone();
                a
            }
        })
    }

    /// Number of operator and leaf nodes.
    pub fn size(&self) -> usize {
        match self {
            Expr::Rel(_) => 1,
            Expr::Select(e, _) | Expr::Project(e, _) | Expr::Rename(e, _, _) => 1 + e.size(),
            Expr::Product(l, r) | Expr::Union(l, r) | Expr::Diff(l, r) => 1 + l.size() + r.size(),
        }
    }
}

fn write_value(f: &mut fmt::Formatter<'_>, v: &Value) -> fmt::Result {
    match v {
        Value::Str(s) => write!(f, "'{}'", s.replace('\'', "''")),
        v => write!(f, "{v}"),
    }
}

pub(crate) fn write_condition(f: &mut fmt::Formatter<'_>, c: &Condition) -> fmt::Result {
    match c {
        Condition::AttrConst(a, op, v) => {
            write!(f, "{a} {op} ")?;
            write_value(f, v)
        }
        Condition::AttrAttr(a, op, b) => write!(f, "{a} {op} {b}"),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Rel(r) => f.write_str(r),
            Expr::Select(e, conds) => {
                write!(f, "select({e}, ")?;
                for (i, c) in conds.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" and ")?;
                    }
                    write_condition(f, c)?;
                }
                f.write_str(")")
            }
            Expr::Project(e, attrs) => write!(f, "project({e}, [{}])", attrs.join(", ")),
            Expr::Product(l, r) => write!(f, "product({l}, {r})"),
            Expr::Union(l, r) => write!(f, "union({l}, {r})"),
            Expr::Diff(l, r) => write!(f, "diff({l}, {r})"),
            Expr::Rename(e, a, b) => write!(f, "rename({e}, {a} -> {b})"),
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Expr(e) => write!(f, "{e}"),
            Query::Possible(e) => write!(f, "possible({e})"),
            Query::Conf(e, t) => {
                write!(f, "conf({e}, (")?;
                for (i, v) in t.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write_value(f, v)?;
                }
                f.write_str("))")
            }
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

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push((s, Tok::Ident(text[s..i].to_string())));
        } else if c.is_ascii_digit() || (c == '-' && b.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let s = i;
            i += 1;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            let n = text[s..i].parse().map_err(|_| Error::parse(s, "integer out of range"))?;
            out.push((s, Tok::Int(n)));
        } else if c == '\'' {
            let s = i;
            let mut buf = String::new();
            i += 1;
            loop {
                match text[i..].chars().next() {
                    None => return Err(Error::parse(s, "unterminated string")),
                    Some('\'') if text[i + 1..].starts_with('\'') => {
                        buf.push('\'');
                        i += 2;
                    }
                    Some('\'') => {
                        i += 1;
                        break;
                    }
                    Some(ch) => {
                        buf.push(ch);
                        i += ch.len_utf8();
                    }
                }
            }
            out.push((s, Tok::Str(buf)));
        } else {
            const SYMS: [&str; 13] = ["->", "!=", "<>", "<=", ">=", "<", ">", "=", ",", "(", ")", "[", "]"];
            match SYMS.iter().find(|s| text[i..].starts_with(**s)) {
                Some(s) => {
                    out.push((i, Tok::Sym(s)));
                    i += s.len();
                }
                None => {
                    let ch = text[i..].chars().next().unwrap();
                    return Err(Error::parse(i, format!("unexpected character '{ch}'")));
                }
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

    fn sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<()> {
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

    fn calls(&self, name: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(name))
            && matches!(self.toks.get(self.pos + 1), Some((_, Tok::Sym("("))))
    }

    fn query(&mut self) -> Result<Query> {
        let q = if self.calls("possible") {
            self.pos += 2;
            let e = self.expr()?;
            self.expect(")")?;
            Query::Possible(e)
        } else if self.calls("conf") {
            self.pos += 2;
            let e = self.expr()?;
            self.expect(",")?;
            let t = self.tuple()?;
            self.expect(")")?;
            Query::Conf(e, t)
        } else {
            Query::Expr(self.expr()?)
        };
        if self.pos < self.toks.len() {
            return Err(self.err("unexpected trailing input"));
        }
        Ok(q)
    }

    fn tuple(&mut self) -> Result<Tuple> {
        self.expect("(")?;
        let mut t = vec![self.value()?];
        while self.sym(",") {
            t.push(self.value()?);
        }
        self.expect(")")?;
        Ok(t)
    }

    fn value(&mut self) -> Result<Value> {
        let v = match self.peek() {
            Some(Tok::Int(n)) => Value::Int(*n),
            Some(Tok::Str(s)) | Some(Tok::Ident(s)) => Value::str(s),
            _ => return Err(self.err("expected a value")),
        };
        self.pos += 1;
        Ok(v)
    }

    fn expr(&mut self) -> Result<Expr> {
        let at = self.here();
        let name = self.ident()?;
        if !self.sym("(") {
            return Ok(Expr::Rel(name));
        }
        let e = match name.to_ascii_lowercase().as_str() {
            "select" => {
                let e = self.expr()?;
                self.expect(",")?;
                let mut conds = vec![self.condition()?];
                while matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case("and")) {
                    self.pos += 1;
                    conds.push(self.condition()?);
                }
                Expr::Select(Box::new(e), conds)
            }
            "project" => {
                let e = self.expr()?;
                self.expect(",")?;
                self.expect("[")?;
                let mut attrs = vec![self.ident()?];
                while self.sym(",") {
                    attrs.push(self.ident()?);
                }
                self.expect("]")?;
                Expr::Project(Box::new(e), attrs)
            }
            "product" | "union" | "diff" => {
                let l = self.expr()?;
                self.expect(",")?;
                let r = self.expr()?;
                let (l, r) = (Box::new(l), Box::new(r));
                match name.to_ascii_lowercase().as_str() {
                    "product" => Expr::Product(l, r),
                    "union" => Expr::Union(l, r),
                    _ => Expr::Diff(l, r),
                }
            }
            "rename" => {
                let e = self.expr()?;
                self.expect(",")?;
                let from = self.ident()?;
                self.expect("->")?;
                let to = self.ident()?;
                Expr::Rename(Box::new(e), from, to)
            }
            _ => return Err(Error::parse(at, format!("unknown operator {name}"))),
        };
        self.expect(")")?;
        Ok(e)
    }

    fn operand(&mut self) -> Result<std::result::Result<String, Value>> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(Ok(s))
            }
            Some(Tok::Int(n)) => {
                self.pos += 1;
                Ok(Err(Value::Int(n)))
            }
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(Err(Value::str(&s)))
            }
            _ => Err(self.err("expected an attribute or a constant")),
        }
    }

    fn condition(&mut self) -> Result<Condition> {
        let at = self.here();
        let lhs = self.operand()?;
        let op = match self.peek() {
            Some(Tok::Sym(s)) => CmpOp::from_symbol(s).ok_or_else(|| self.err("expected a comparison"))?,
            _ => return Err(self.err("expected a comparison")),
        };
        self.pos += 1;
        let rhs = self.operand()?;
        Ok(match (lhs, rhs) {
            (Ok(a), Ok(b)) => Condition::AttrAttr(a, op, b),
            (Ok(a), Err(v)) => Condition::AttrConst(a, op, v),
            (Err(v), Ok(a)) => Condition::AttrConst(a, op.flip(), v),
            (Err(_), Err(_)) => return Err(Error::parse(at, "a condition must mention an attribute")),
        })
    }
}

/// Parses a query or a `possible(...)` / `conf(..., (...))` command.
pub fn parse_query(text: &str) -> Result<Query> {
    let toks = lex(text)?;
    if toks.is_empty() {
        return Err(Error::parse(0, "empty query"));
    }
    Parser { toks, pos: 0, end: text.len() }.query()
}

/// Parses a relation-valued expression.
pub fn parse_expr(text: &str) -> Result<Expr> {
    match parse_query(text)? {
        Query::Expr(e) => Ok(e),
        _ => Err(Error::parse(0, "expected a relational expression")),
    }
}

/// Evaluates an expression with the WSD algebra, one operator per node.
///
/// Results and intermediates are added as fresh relations; the name of the
/// result is returned. A bare relation name evaluates to itself.
pub fn eval_wsd(wsd: &mut Wsd, e: &Expr) -> Result<String> {
    e.attrs(wsd.schema())?;
    eval_node(wsd, e)
}

fn eval_node(wsd: &mut Wsd, e: &Expr) -> Result<String> {
    let fresh = |w: &Wsd| w.schema().fresh_name("_q");
    Ok(match e {
        Expr::Rel(r) => r.clone(),
        Expr::Select(inner, conds) => {
            let mut cur = eval_node(wsd, inner)?;
            for c in conds {
                let out = fresh(wsd);
                algebra::select_in(wsd, &cur, c, &out)?;
                cur = out;
            }
            cur
        }
        Expr::Project(inner, attrs) => {
            let src = eval_node(wsd, inner)?;
            let out = fresh(wsd);
            let attrs: Vec<&str> = attrs.iter().map(String::as_str).collect();
            algebra::project_in(wsd, &src, &attrs, &out)?;
            out
        }
        Expr::Product(l, r) | Expr::Union(l, r) | Expr::Diff(l, r) => {
            let a = eval_node(wsd, l)?;
            let b = eval_node(wsd, r)?;
            let out = fresh(wsd);
            match e {
                Expr::Product(..) => algebra::product_in(wsd, &a, &b, &out)?,
                Expr::Union(..) => algebra::union_in(wsd, &a, &b, &out)?,
                _ => algebra::difference_in(wsd, &a, &b, &out)?,
            }
            out
        }
        Expr::Rename(inner, from, to) => {
            let src = eval_node(wsd, inner)?;
            let out = fresh(wsd);
            algebra::copy_in(wsd, &src, &out)?;
            algebra::rename_in(wsd, &out, from, to)?;
            out
        }
    })
}

/// Evaluates an expression on a UWSDT through the rewritten plan.
pub fn eval_uwsdt(u: &mut Uwsdt, e: &Expr) -> Result<String> {
    let plan = rewrite_query(e, u.schema())?;
    plan.execute(u)
}
