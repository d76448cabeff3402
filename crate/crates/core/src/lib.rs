//! Canonical forms for batched einsums.
//!
//! A batched einsum is `b` einsums that share their index structure and
//! differ only in which arrays they read. This crate maps every batched
//! einsum to a canonical representative of its isomorphism class (renaming
//! indices and arrays, reordering rows and operand slots), derives a stable
//! text key from it, and keeps a small database of measured transformation
//! results keyed by that text.

pub mod canonicalize;
pub mod error;
pub mod factsdb;
pub mod graph_canon;
pub mod induced_graph;
pub mod model;
pub mod notation;
pub mod raising;

pub use canonicalize::{canonicalize, is_isomorphic, verify_witness, CanonResult};
pub use error::{Error, ParseError, Result};
pub use model::{ArrayMeta, BatchedEinsum, DtypeCode, IndexList, SubstitutionWitness};
pub use notation::{canonical_key, parse_classic, print_classic};
