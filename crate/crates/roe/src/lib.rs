//! Robust ordinal embedding from contaminated relative comparisons.
//!
//! Objects are never observed directly; the only input is a set of
//! crowd-sourced "pair (i,j) is more similar than pair (l,k)" annotations,
//! some of which are wrong. The library aggregates those annotations into a
//! directed comparison multigraph, then jointly fits a low-rank Gram matrix
//! and a sparse per-edge outlier vector by accelerated proximal gradient
//! descent over the positive semidefinite cone, with an exact-rank step
//! based on semidefinite rank reduction.
//!
//! The crate also ships the classical triplet-embedding baselines
//! (GNMDS-p, CKL-p, STE-p), a majority-voting pruner, a synthetic data
//! generator, and the evaluation harness used by the `roe` CLI.

pub mod baselines;
pub mod datagen;
pub mod eval;
pub mod experiment;
pub mod gram;
pub mod graph;
pub mod io;
pub mod oracles;
pub mod rank_reduction;
pub mod solver;

pub use gram::{factorize, gram_to_distance, psd_project, truncate_rank, Embedding};
pub use graph::{Annotation, ComparisonGraph, ConstraintMatrix, DesignMatrix, GraphError};
