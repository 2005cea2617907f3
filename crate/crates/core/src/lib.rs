//! Periodic orbits of slow-fast Hamiltonian systems whose slow manifold
//! undergoes a pair of pitchfork bifurcations along a slow phase `u`.
//!
//! The model family is
//!
//! ```text
//! H = v + ½y²(1 + M(x², y², u)) − ½f(u)x² + ½x⁴(1 + V(x², u)),   u̇ = ε,
//! ```
//!
//! with the toy instance `f = sin u`, `M = V = 0`. The crate integrates the
//! extended system with the two-stage Gauss–Legendre method, counts and
//! classifies symmetric periodic orbits by shooting, and implements the
//! analytic return-map predictions built from the Painlevé-II connection
//! formulae.

pub mod asymptotic_maps;
pub mod error;
pub mod integrator;
pub mod model;
pub mod numerics;
pub mod orbits;
pub mod painleve;
pub mod predictor;
pub mod specfun;

pub use error::{Error, Result};
pub use model::{ExtendedState, ModelSpec, ScaleFrame};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
