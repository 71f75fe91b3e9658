//! Hierarchical distributed parameter estimation.
//!
//! Every agent runs two loosely coupled blocks:
//!
//! 1. a dynamic average consensus (DAC) block that tracks the network
//!    average of the surrogate regression data `C'_i = C_iᵀC_i`,
//!    `y'_i = C_iᵀy_i`, and
//! 2. a local estimator (gradient or DREM) driven by the consensus outputs.
//!
//! The crate provides the building blocks ([`graph`], [`signals`],
//! [`consensus`], [`estimators`]), the excitation and gain-bound calculus
//! ([`excitation`]), and a deterministic fixed-step simulator ([`sim`]) that
//! runs nominal, quantized, switched, noisy and lossy scenarios.
//!
//! Data-parallel work (excitation window scans, supremum estimation, sweeps,
//! per-agent field evaluation on large networks) goes through [`Execution`],
//! which uses rayon when the `parallel` feature is enabled and falls back to
//! plain iterators otherwise.

// `!(x > 0.0)` is used on purpose so NaN fails validation, and index loops
// over flat RK4 state read more clearly than zipped iterators.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod consensus;
pub mod error;
pub mod estimators;
pub mod excitation;
pub mod graph;
pub mod linalg;
pub mod par;
pub mod signals;
pub mod sim;

pub use error::{Error, Result};
pub use par::Execution;
