//! Operational consistent query answering under primary keys.
//!
//! The crate counts operational repairs and complete repairing sequences
//! that entail a conjunctive-query answer. Counts are obtained either by
//! exhaustive enumeration or by compiling alternating procedures over a
//! hypertree decomposition into tree automata and counting accepted trees.

pub mod ato;
pub mod cqeval;
pub mod error;
pub mod exec;
pub mod gen;
pub mod ghw;
pub mod guards;
pub mod model;
pub mod nfta;
pub mod opsem;
pub mod pipeline;
pub mod random;

pub use error::{Error, Result};
