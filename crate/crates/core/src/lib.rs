//! Magnetic manifold Hamiltonian Monte Carlo.
//!
//! This crate implements samplers for densities π(q) ∝ exp(−U(q)) restricted to an
//! embedded manifold M = {q ∈ ℝᵐ : g(q) = 0}, driven by Hamiltonian dynamics under a
//! *magnetic* (non-canonical) symplectic structure
//!
//! ```text
//!     J = | L   I |        L ∈ Skew(m),
//!         | -I  0 |
//! ```
//!
//! The proposal map is a symmetric, symplectic integrator: a Strang splitting of
//! H(q, p) = U(q) + ½pᵀp into two half potential kicks around an exactly solvable
//! magnetic drift, with Lagrange multipliers restoring the position and momentum
//! constraints after every step. Setting L = 0 recovers canonical constrained HMC
//! with a leapfrog core.
//!
//! Modules:
//!
//! - [`magnetic`]: skew-symmetric fields, their real spectral factorization, and the
//!   closed-form split flows on Euclidean space.
//! - [`manifold`]: the embedded-manifold abstraction plus the concrete catalog
//!   (affine subspaces, spheres, Stiefel, SO(n), products).
//! - [`target`]: potentials paired with their manifolds.
//! - [`integrator`]: the constrained magnetic step: Newton solve for the position
//!   multiplier, normal equations for the momentum multiplier.
//! - [`sampler`]: HMC / MALA / random-walk transition operators and chain drivers.
//! - [`diagnostics`]: effective sample size and numerical structure checks
//!   (reversibility, symplecticness, order, feasibility).
//! - [`catalog`]: ready-made experiment targets used by tests and the CLI.
//!
//! The crate is `no_std` (with `alloc`): all computation is pure and deterministic
//! given the caller's RNG, and chains can run concurrently against shared targets.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod catalog;
pub mod diagnostics;
mod error;
pub mod integrator;
pub mod magnetic;
pub mod manifold;
pub mod sampler;
pub mod target;

pub use error::Error;
pub use magnetic::{MagneticField, PhaseState, SkewMatrix, SpectralFactorization};
pub use manifold::Manifold;
pub use target::Target;



/// Dense column vector of `f64`, the ambient coordinate type.
pub type Vector = nalgebra::DVector<f64>;
/// Dense `f64` matrix.
pub type Matrix = nalgebra::DMatrix<f64>;

/// Max-absolute-entry norm, the residual measure used throughout.
pub fn max_abs(v: &Vector) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}
