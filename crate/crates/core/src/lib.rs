//! Adaptive compressed sensing of tree-sparse signals.
//!
//! The crate covers the acquisition procedure itself ([`sensing`]), its
//! failure bounds ([`bounds`]), learning orthonormal dictionaries whose codes
//! are tree-sparse ([`dictlearn`]), the comparison methods ([`baselines`])
//! and the experiment drivers behind the `treesense` binary ([`harness`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bounds;
pub mod dictionary;
pub mod dictlearn;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod sensing;
pub mod tree;

pub use dictionary::Dictionary;
pub use error::{Error, Result};
pub use tree::{make_tree, TreeTopology};
