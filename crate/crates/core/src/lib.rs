//! World-set decompositions: a compact representation of finite sets of
//! probabilistic possible worlds, with relational algebra, confidence
//! computation, normalization and chase-based cleaning evaluated directly on
//! the decomposed form.

pub mod algebra;
pub mod bench;
pub mod chase;
pub mod confidence;
pub mod decomposition;
pub mod error;
pub mod fixtures;
pub mod model;
pub mod normalize;
pub mod orset;
pub mod query;
pub mod uwsdt;
pub mod value;

pub use error::{Error, Result};
pub use model::*;
pub use value::{CmpOp, Value};

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../README.md")]
    pub mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/worlds.md")]
    pub mod worlds {}
    #[doc = include_str!("../../../book/src/queries.md")]
    pub mod queries {}
    #[doc = include_str!("../../../book/src/templates.md")]
    pub mod templates {}
    #[doc = include_str!("../../../book/src/confidence.md")]
    pub mod confidence {}
    #[doc = include_str!("../../../book/src/normalization.md")]
    pub mod normalization {}
    #[doc = include_str!("../../../book/src/cleaning.md")]
    pub mod cleaning {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    pub mod benchmarks {}
}
