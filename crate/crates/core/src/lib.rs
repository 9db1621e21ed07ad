//! Branching Brownian particles with leftmost selection.
//!
//! The crate covers both sides of the model:
//!
//! * the stochastic side ([`particle`]): exact event-driven simulation of the
//!   basic branching process, the constant-size process that deletes its
//!   leftmost particle at each branching, the upper and lower stochastic
//!   barriers, and the order-preserving couplings between them;
//! * the deterministic side ([`freeevo`], [`barrier`], [`fbp`]): the free
//!   evolution semigroup on a uniform grid, the cut-and-evolve barrier
//!   iterations, their separating element and the free-boundary solution
//!   extracted from it.
//!
//! [`metrics`] holds the comparison toolkit (mass-transport order and
//! distance, cell semi-norms, coarse graining) used to tie the two together.

pub mod barrier;
pub mod config;
pub mod error;
pub mod fbp;
pub mod freeevo;
pub mod grid;
pub mod kernel;
pub mod measure;
pub mod metrics;
pub mod particle;
pub mod rng;
pub mod stats;

pub use config::{Partition, RunConfig};
pub use error::{Error, Result};
pub use grid::GridDensity;
pub use kernel::{BranchingKernel, InitialDensity, SmoothBump};
pub use measure::{EmpiricalMeasure, ParticleConfiguration, Trajectory, TrajectoryMeta, Variant};
pub use rng::SimRng;
