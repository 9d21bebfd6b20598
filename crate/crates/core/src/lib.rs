//! Numerical laboratory for Dirichlet forms `ℰ(F,G) = ∫⟨DF, A DG⟩_H φ dν` on
//! Wiener space with an unbounded diagonal diffusion operator `A`.
//!
//! The crate works in Schauder coordinates: `A` is diagonal in the Schauder
//! basis of the Cameron–Martin space, cylindrical functionals are handled
//! through their exact gradients, and the associated diffusion is simulated
//! as a Galerkin-truncated system of coordinate SDEs.

pub mod basis;
pub mod cylindrical;
pub mod error;
pub mod generator;
pub mod montecarlo;
pub mod quadrature;
pub mod simulate;
pub mod spectral;
pub mod weight;

pub use error::{Error, Result};
