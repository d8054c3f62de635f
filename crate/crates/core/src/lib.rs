//! Block-sparse signal recovery by mixed l2/l1 minimization, together with
//! the tooling needed to check recovery guarantees at desk scale:
//!
//! - [`block_model`]: block structures, block vectors and mixed norms.
//! - [`rip_cert`]: exact and sampled block restricted-isometry constants.
//! - [`solver`]: an alternating-direction solver for
//!   `min ||x||_{2,1} s.t. ||y - Ax||_2 <= eps`.
//! - [`polytope`]: convex decomposition of the block polytope into
//!   block-sparse atoms, and the tail power inequality probe.
//! - [`guarantees`]: the high-order block RIP error bound and the cone
//!   constraint checker.
//! - [`counterexample`]: the sharpness instance on which mixed l2/l1
//!   minimization provably fails.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. Block indices are 0-based throughout.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod block_model;
pub mod counterexample;
mod error;
pub mod guarantees;
pub mod linalg;
mod math;
pub mod polytope;
pub mod rip_cert;
pub mod solver;

pub use block_model::{BlockIndexSet, BlockStructure, BlockVector};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use rip_cert::{RicMode, RicReport, SensingMatrix};
pub use solver::{MeasurementInstance, SolverConfig, SolverResult};
