//! Query plans: a query tree flattened into primitive steps on one UWSDT.
//!
//! Every step writes a fresh relation and reads earlier ones, so a relation
//! used twice is read twice from the same store and stays correlated.

use std::fmt;

use super::Uwsdt;
use crate::algebra::Condition;
use crate::error::Result;
use crate::model::Schema;
use crate::query::{write_condition, Expr};

#[derive(Clone, Debug, PartialEq)]
pub enum StepOp {
    Select {
        input: String,
        conds: Vec<Condition>,
    },
    Project {
        input: String,
        attrs: Vec<String>,
    },
    /// A selection followed by a projection, evaluated as one step.
    SelectProject {
        input: String,
        conds: Vec<Condition>,
        attrs: Vec<String>,
    },
    Product {
        left: String,
        right: String,
    },
    /// A product with the selection over it folded in.
    Join {
        left: String,
        right: String,
        conds: Vec<Condition>,
    },
    Union {
        left: String,
        right: String,
    },
    Difference {
        left: String,
        right: String,
    },
    Rename {
        input: String,
        from: String,
        to: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub out: String,
    pub op: StepOp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub steps: Vec<Step>,
    /// The relation holding the answer; a base relation if there are no steps.
    pub output: String,
}

/// Translates a query into a plan, merging stacked selections, folding
/// selections into products and projections into selections, and pushing
/// single-side conditions below products.
pub fn rewrite_query(e: &Expr, schema: &Schema) -> Result<Plan> {
    e.attrs(schema)?;
    let mut b = Builder { schema: schema.clone(), steps: Vec::new(), counter: 0 };
    let output = b.lower(e)?;
    Ok(Plan { steps: b.steps, output })
}

struct Builder {
    schema: Schema,
    steps: Vec<Step>,
    counter: usize,
}

/// Peels stacked selections off an expression.
fn flatten_select(e: &Expr) -> (&Expr, Vec<Condition>) {
    let mut conds = Vec::new();
    let mut cur = e;
    let mut layers = Vec::new();
    while let Expr::Select(inner, cs) = cur {
        layers.push(cs);
        cur = inner;
    }
    for cs in layers.into_iter().rev() {
        conds.extend(cs.iter().cloned());
    }
    (cur, conds)
}

fn names(c: &Condition) -> Vec<&str> {
    match c {
        Condition::AttrConst(a, _, _) => vec![a],
        Condition::AttrAttr(a, _, b) => vec![a, b],
    }
}

impl Builder {
    fn fresh(&mut self) -> String {
        loop {
            self.counter += 1;
            let n = format!("_p{}", self.counter);
            if !self.schema.contains(&n) {
                return n;
            }
        }
    }

    fn emit(&mut self, op: StepOp) -> String {
        let out = self.fresh();
        self.steps.push(Step { out: out.clone(), op });
        out
    }

    fn lower(&mut self, e: &Expr) -> Result<String> {
        Ok(match e {
            Expr::Rel(r) => r.clone(),
            Expr::Select(..) => {
                let (base, conds) = flatten_select(e);
                if let Expr::Product(l, r) = base {
                    return self.lower_join(l, r, conds);
                }
                let input = self.lower(base)?;
                self.emit(StepOp::Select { input, conds })
            }
            Expr::Project(inner, attrs) => {
                let (base, conds) = flatten_select(inner);
                if !conds.is_empty() && !matches!(base, Expr::Product(..)) {
                    let input = self.lower(base)?;
                    self.emit(StepOp::SelectProject { input, conds, attrs: attrs.clone() })
                } else {
                    let input = self.lower(inner)?;
                    self.emit(StepOp::Project { input, attrs: attrs.clone() })
                }
            }
            Expr::Product(l, r) => {
                let (left, right) = (self.lower(l)?, self.lower(r)?);
                self.emit(StepOp::Product { left, right })
            }
            Expr::Union(l, r) => {
                let (left, right) = (self.lower(l)?, self.lower(r)?);
                self.emit(StepOp::Union { left, right })
            }
            Expr::Diff(l, r) => {
                let (left, right) = (self.lower(l)?, self.lower(r)?);
                self.emit(StepOp::Difference { left, right })
            }
            Expr::Rename(inner, from, to) => {
                let input = self.lower(inner)?;
                self.emit(StepOp::Rename { input, from: from.clone(), to: to.clone() })
            }
        })
    }

    fn lower_join(&mut self, l: &Expr, r: &Expr, conds: Vec<Condition>) -> Result<String> {
        let la = l.attrs(&self.schema)?;
        let ra = r.attrs(&self.schema)?;
        let (mut lc, mut rc, mut cross) = (Vec::new(), Vec::new(), Vec::new());
        for c in conds {
            let ns = names(&c);
            if ns.iter().all(|n| la.iter().any(|a| a == n)) {
                lc.push(c);
            } else if ns.iter().all(|n| ra.iter().any(|a| a == n)) {
                rc.push(c);
            } else {
                cross.push(c);
            }
        }
        let side = |e: &Expr, cs: Vec<Condition>| {
            if cs.is_empty() {
                e.clone()
            } else {
                Expr::Select(Box::new(e.clone()), cs)
            }
        };
        let left = self.lower(&side(l, lc))?;
        let right = self.lower(&side(r, rc))?;
        Ok(if cross.is_empty() {
            self.emit(StepOp::Product { left, right })
        } else {
            self.emit(StepOp::Join { left, right, conds: cross })
        })
    }
}

impl Plan {
    /// Runs the steps in order and returns the output relation.
    pub fn execute(&self, u: &mut Uwsdt) -> Result<String> {
        fn strs(v: &[String]) -> Vec<&str> {
            v.iter().map(String::as_str).collect()
        }
        for s in &self.steps {
            match &s.op {
                StepOp::Select { input, conds } => u.select(input, conds, &s.out)?,
                StepOp::Project { input, attrs } => u.project(input, &strs(attrs), &s.out)?,
                StepOp::SelectProject { input, conds, attrs } => {
                    let tmp = u.schema().fresh_name(&format!("{}_sel", s.out));
                    u.select(input, conds, &tmp)?;
                    u.project(&tmp, &strs(attrs), &s.out)?;
                    u.drop_relation(&tmp)?;
                }
                StepOp::Product { left, right } => u.product(left, right, &s.out)?,
                StepOp::Join { left, right, conds } => u.join(left, right, conds, &s.out)?,
                StepOp::Union { left, right } => u.union(left, right, &s.out)?,
                StepOp::Difference { left, right } => u.difference(left, right, &s.out)?,
                StepOp::Rename { input, from, to } => u.rename(input, from, to, &s.out)?,
            }
        }
        Ok(self.output.clone())
    }
}

struct Conds<'a>(&'a [Condition]);

impl fmt::Display for Conds<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" and ")?;
            }
            write_condition(f, c)?;
        }
        Ok(())
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} := ", self.out)?;
        match &self.op {
            StepOp::Select { input, conds } => write!(f, "select({input}, {})", Conds(conds)),
            StepOp::Project { input, attrs } => write!(f, "project({input}, [{}])", attrs.join(", ")),
            StepOp::SelectProject { input, conds, attrs } => {
                write!(f, "project(select({input}, {}), [{}])", Conds(conds), attrs.join(", "))
            }
            StepOp::Product { left, right } => write!(f, "product({left}, {right})"),
            StepOp::Join { left, right, conds } => write!(f, "join({left}, {right}, {})", Conds(conds)),
            StepOp::Union { left, right } => write!(f, "union({left}, {right})"),
            StepOp::Difference { left, right } => write!(f, "diff({left}, {right})"),
            StepOp::Rename { input, from, to } => write!(f, "rename({input}, {from} -> {to})"),
        }
    }
}
