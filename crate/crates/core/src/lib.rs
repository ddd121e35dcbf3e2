//! Boundary-integral solver for two-dimensional unsteady Stokes flow using a
//! mixed (combined source) potential representation:
//! a harmonic single layer carrying the pressure source `ρ` plus a single-layer
//! heat potential carrying the vortex source `μ`.
//!
//! The special-function and Krylov layers are generic over [`Real`]; the
//! physics layers work in `f64`.

pub mod analysis;
pub mod error;
pub mod geom;
pub mod heat_pot;
pub mod laplace_pot;
pub mod quad;
pub mod solver;
pub mod specfun;
pub mod testbed;

pub use error::{Error, Result};

use num_traits::{Float, FromPrimitive};

/// Scalar type usable by the generic numerical kernels.
pub trait Real: Float + FromPrimitive + std::fmt::Debug + Send + Sync + 'static {}

impl<T> Real for T where T: Float + FromPrimitive + std::fmt::Debug + Send + Sync + 'static {}

/// Double-precision node set, the default used by the solver.
pub type Nodes = specfun::Nodes1D<f64>;
/// Double-precision stencil weights.
pub type Stencil = specfun::StencilWeights<f64>;

/// A point or vector in the plane.
pub type Vec2 = [f64; 2];
