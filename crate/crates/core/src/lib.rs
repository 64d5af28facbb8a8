//! Numerical models of skill learning: the Geometry model (gradient dynamics
//! on task vectors), the Resource model (ODEs for competing skills), the
//! Domino model (strictly sequential closed form), plus an optimizer zoo,
//! small MLP experiments and power-law fitting.

pub mod domino;
pub mod error;
pub mod geometry;
pub mod mlp;
pub mod optim;
pub mod presets;
pub mod quadratic;
pub mod resource;
pub mod rng;
pub mod scaling;
pub mod taskdist;
pub mod trajectory;

pub use error::{Error, Result};
pub use geometry::{GeometrySystem, LossKind, RunOptions};
pub use resource::{ResourceSystem, Variant};
pub use optim::{Algo, Optimizer, OptimizerSpec, OptimizerState, Schedule};
pub use taskdist::{DistKind, TaskDistribution, TaskVectorSet, VectorMode};
pub use trajectory::Trajectory;
