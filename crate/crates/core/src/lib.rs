//! Inhomogeneous bond percolation on the slab `Z_+^2 x {0..k}` with enhanced
//! columns selected by a heavy-tailed renewal process.
//!
//! The crate provides the lattice geometry, environment and configuration
//! samplers, connectivity queries, Monte Carlo estimators, the block
//! renormalization and the multiscale hierarchy.

pub mod connectivity;
pub mod environment;
pub mod error;
pub mod estimators;
pub mod lattice;
pub mod multiscale;
pub mod renorm;
pub mod rng;
pub mod sampler;
pub mod unionfind;

pub use environment::{Environment, IntervalClassification, RenewalParams};
pub use error::{Error, Result};
pub use lattice::{Box3, Direction, Edge, RegionKind, SlabLattice, Vertex};
pub use multiscale::{MultiscaleParams, QmSetup};
pub use renorm::{CoarseEdge, RenormConfig, RenormSpec};
pub use sampler::{BondConfiguration, EnhancementRule, ModelParams, PercolationModel, UniformField};
