//! Joint architecture / token / precision compression explorer for Vision
//! Transformers.
//!
//! The crate builds a small ViT from scratch and lets three compression axes
//! be combined and compared:
//!
//! * **architecture**: subnets sliced out of a weight-entangled supernet
//!   ([`model`]),
//! * **tokens**: bipartite soft-matching token merging ([`tome`]),
//! * **bit-width**: binary16 emulation of the whole forward pass
//!   ([`numerics`]).
//!
//! [`cost`] counts parameters, FLOPs and an energy proxy analytically and
//! times forward passes; [`probe`] provides a synthetic classification task
//! and a linear probe for the accuracy axis; [`search`] runs a budgeted
//! evolutionary search over all three axes and extracts Pareto fronts.

pub mod cli;
pub mod cost;
pub mod error;
pub mod model;
pub mod numerics;
pub mod probe;
pub mod search;
pub mod seed;
pub mod tome;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/token-merging.md")]
    mod token_merging {}
    #[doc = include_str!("../../../book/src/precision.md")]
    mod precision {}
    #[doc = include_str!("../../../book/src/cost.md")]
    mod cost {}
    #[doc = include_str!("../../../book/src/probe.md")]
    mod probe {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
