//! Numerical laboratory for kernel estimation in the d-dimensional white
//! Gaussian noise model.
//!
//! The crate provides the algorithmic core: discretized white-noise
//! observations on tensor grids, higher-order product kernels, constant and
//! piecewise-constant bandwidth fields on dyadic partitions, kernel smoothers
//! and their bias/stochastic decomposition, the data-driven pairwise bandwidth
//! selection rule with explicit penalty constants, anisotropic Nikolskii class
//! machinery (finite differences, embeddings, strong maximal operator), the
//! minimax rate calculus across all regimes, and the lower-bound test-function
//! generator (bump products over Varshamov-Gilbert index sets).
//!
//! Everything here is pure computation over immutable values; IO, experiment
//! orchestration and file formats live in the companion `wnlab` crate.
//!
//! The crate is `no_std`-compatible (`alloc` required): disable the default
//! `std` feature for embedded or wasm use.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod bandwidth;
pub mod error;
pub mod estimator;
pub mod grid;
pub mod kernels;
mod math;
pub mod nikolskii;
pub mod noise;
pub mod quad;
pub mod rates;
pub mod selection;
#[cfg(feature = "serde")]
pub mod serde_util;
pub mod testbed;

pub use bandwidth::{BandwidthField, BandwidthVector, ComplexityParams, DyadicPartition};
pub use estimator::EstimateDecomposition;
pub use error::CoreError;
pub use grid::{Grid, GridFunction};
pub use kernels::{KernelProfile, ProductKernel, ScalarKernel};
pub use nikolskii::{ClassSpec, MembershipReport};
pub use noise::{NoiseField, Observation};
pub use rates::{RateProfile, Zone};
pub use selection::{Psi, PsiMode, SelectionResult, UpperFunctionConfig};
pub use testbed::{BumpFamily, LowerBoundConstants, VgSet};

