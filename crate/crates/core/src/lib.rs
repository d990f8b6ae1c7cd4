//! Explicit penalty particle method for incompressible flow with generalized
//! SPH/MPS operators.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`) and the
//! spatial dimension (2 or 3). The aliases at the crate root fix `f64`.

pub mod config;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod io;
pub mod neighbor;
pub mod operators;
pub mod optimize;
pub mod particles;
pub mod quadrature;
pub mod runner;
pub mod scalar;
pub mod solver;
pub mod vector;
pub mod weights;

pub use domain::{min_image_displacement, wrap_position, DomainSpec};
pub use error::{Error, Result};
pub use neighbor::{NeighborList, VerletCache};
pub use operators::{c0h, OperatorSet};
pub use particles::{lattice_init, ParticleKind, ParticleSystem};
pub use scalar::Real;
pub use solver::{dt_max, CollisionParams, Diagnostics, Solver, SolverConfig, StepState};
pub use weights::{BaseKernel, Preset, ReferenceWeight, RoleTransform, WeightTriple};

pub type DomainSpec2 = DomainSpec<f64, 2>;
pub type DomainSpec3 = DomainSpec<f64, 3>;
pub type ParticleSystem2 = ParticleSystem<f64, 2>;
pub type ParticleSystem3 = ParticleSystem<f64, 3>;
pub type NeighborList2 = NeighborList<f64, 2>;
pub type NeighborList3 = NeighborList<f64, 3>;
