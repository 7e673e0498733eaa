//! Positive measures on binary set systems, represented by product coefficients.
//!
//! A measure on a set with an ordered binary set system is determined by its
//! total mass and, for every non-leaf set `S`, the coefficient `a_S` solving
//!
//! ```text
//! mu(L(S)) = (1 + a_S) / 2 * mu(S)
//! mu(R(S)) = (1 - a_S) / 2 * mu(S)
//! ```
//!
//! This crate converts between leaf masses and coefficient trees at a finite
//! depth, computes multiscale statistics on coefficients, ingests time series,
//! point clouds and feature systems, simulates the dyadic Gaussian multiscale
//! noise model, and renders pseudo-welding curves and day wheels.

pub mod error;
pub mod ingest;
pub mod io;
pub mod measure;
pub mod node;
pub mod noise;
pub mod stats;
pub mod tree;
pub mod viz;

pub use error::{Error, Result};
pub use measure::{LeafMeasure, SparseLeafMeasure};
pub use node::NodeId;
pub use tree::{CoefficientTree, NaryCoefficients, Violation};

/// Largest depth supported by node addressing (indices are `u64`).
pub const MAX_DEPTH: u32 = 62;
