//! Numerical verification that general rank-8 tensors in `C^3 ⊗ C^6 ⊗ C^6`
//! are not identifiable.
//!
//! The crate follows the geometric argument end to end: secant dimensions
//! by Terracini's lemma, a special fourfold through eight general simple
//! tensors, the degree of a tangential projection by fiber counting, and a
//! multistart decomposer that finds the inequivalent decompositions directly.

pub mod assignment;
pub mod cjson;
pub mod decomposer;
pub mod error;
pub mod fourfold;
pub mod linalg;
pub mod multilinear;
pub mod pipeline;
pub mod secant;
pub mod seed;
pub mod tangential;

pub use error::{Error, Result};
pub use seed::Seed;
