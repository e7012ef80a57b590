//! Binary quadratic optimization workbench.
//!
//! Three solver families over one problem core:
//! low-rank factorized SDP ascent with hyperplane rounding, smooth
//! rank-surrogate descent with PSD-certified steps, entropy-penalized
//! low-rank SDP, and exact MAP inference for attractive Ising models
//! with safety-polytope projection.

pub mod epsdp;
pub mod error;
pub mod io;
pub mod ising;
pub mod lowrank;
pub mod model;
pub mod prevent;
pub mod rankmin;

pub use error::{Error, Result};
pub use model::{
    brute_force_max, energy, qubo_to_quadratic, IsingModel, QuadraticProblem, QuboProblem,
    SpinState, WeightedGraph,
};
