//! Scalar values, comparison operators and the text codec shared by every file format.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A field value: a typed constant or the absence marker ⊥.
///
/// The derived order puts integers before strings and ⊥ last, which is the
/// order used for canonical tuple sorting.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Str(Arc<str>),
    Bottom,
}

impl Value {
    pub fn str(s: &str) -> Self {
        Value::Str(Arc::from(s))
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, Value::Bottom)
    }

    /// Encodes a value for a CSV cell.
    ///
    /// Integers are written bare. Strings are written bare unless they could be
    /// read back as something else, in which case they get an `s:` prefix.
    pub fn encode(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Bottom => BOTTOM_TEXT.to_string(),
            Value::Str(s) => {
                if needs_tag(s) {
                    format!("s:{s}")
                } else {
                    s.to_string()
                }
            }
        }
    }

    /// Inverse of [`Value::encode`].
    pub fn decode(text: &str) -> Value {
        if text == BOTTOM_TEXT {
            Value::Bottom
        } else if let Some(rest) = text.strip_prefix("s:") {
            Value::str(rest)
        } else if let Ok(i) = text.parse::<i64>() {
            Value::Int(i)
        } else {
            Value::str(text)
        }
    }
}

pub const BOTTOM_TEXT: &str = "\\bot";
pub const PLACEHOLDER_TEXT: &str = "?";

fn needs_tag(s: &str) -> bool {
    s == BOTTOM_TEXT || s == PLACEHOLDER_TEXT || s.starts_with("s:") || s.parse::<i64>().is_ok()
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::str(s)
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => write!(f, "{s}"),
            Value::Bottom => f.write_str("⊥"),
        }
    }
}

/// θ in selections and dependency atoms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<CmpOp> {
        Some(match s {
            "=" => CmpOp::Eq,
            "!=" | "<>" => CmpOp::Ne,
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            ">" => CmpOp::Gt,
            ">=" => CmpOp::Ge,
            _ => return None,
        })
    }

    /// Evaluates `a θ b`. Anything involving ⊥ is false.
    ///
    /// Equality across types is simply false; ordering across types is an error.
    pub fn eval(self, a: &Value, b: &Value) -> Result<bool> {
        let ord = match (a, b) {
            (Value::Bottom, _) | (_, Value::Bottom) => return Ok(false),
            (Value::Int(x), Value::Int(y)) => x.cmp(y),
            (Value::Str(x), Value::Str(y)) => x.cmp(y),
            _ => {
                return match self {
                    CmpOp::Eq => Ok(false),
                    CmpOp::Ne => Ok(true),
                    _ => Err(Error::TypeMismatch(format!("cannot evaluate {a} {} {b}", self.symbol()))),
                }
            }
        };
        Ok(match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        })
    }

    /// The operator with swapped operands: `a θ b` iff `b θ' a`.
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            op => op,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}
