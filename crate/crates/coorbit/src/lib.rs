//! Sorting-based invariant embeddings for finite orthogonal group actions.
//!
//! A finite group of orthogonal matrices acts on `R^d`. For a template vector
//! `phi`, the coorbit of `v` is the vector of inner products of `v` with every
//! group image of `phi`; sorting coorbits produces a group-invariant matrix,
//! and a linear reduction compresses it to the final embedding. The crate
//! provides the pipeline itself plus the diagnostics that make its metric
//! behaviour checkable at desk scale: quotient-metric estimates of the
//! bi-Lipschitz constants, an orbit-collision falsifier, exact constants for
//! the sign-retrieval instance, brute-force oracles for the sorting
//! combinatorics, and the classic injective-but-not-bi-Lipschitz ReLU map.

pub mod analysis;
pub mod embedding;
pub mod group;
pub mod relu;
pub mod signretrieval;
pub mod sorting;

pub use analysis::{estimate_bilipschitz, lipschitz_upper_bound, operator_norm};
pub use embedding::{embed, embed_diag, EmbeddingPipeline, Reduction, TemplateSet};
pub use group::{build_group_from_generators, FiniteGroup, GroupElement};
pub use signretrieval::MeasurementFrame;
