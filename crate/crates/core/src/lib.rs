//! Bloch band structures of the scalar wave equation
//! `ρ0(y) ∂²u/∂t² = div(A0(y) ∇u)` with periodic coefficients, computed by a
//! plane-wave Galerkin method, together with group velocities and a check of
//! the bound `|V| ≤ c_max` by the maximal characteristic speed.
//!
//! The cell problem at quasi-momentum `θ ∈ [0,1)^N`,
//!
//! ```text
//! −(div + 2iπθ)(A0 (∇ + 2iπθ) ψ) = λ ρ0 ψ   on the unit torus,
//! ```
//!
//! becomes the generalized Hermitian eigenproblem `H(θ) v = λ M v`; the
//! frequency is `ω = √λ/(2π)` and the group velocity `V = −∇λ/(4π√λ)`.

pub mod eigensolve;
pub mod error;
pub mod harness;
pub mod medium;
pub mod oracle1d;
pub mod planewave;
pub mod velocity;

pub use eigensolve::{generalized_eig, is_simple, SimplicityTest, Spectrum};
pub use error::{BlochError, Result};
pub use harness::{band_structure, verify_bound, BandTable, BoundReport, GridKind, SweepConfig};
pub use medium::{Layer, LayeredOptions, PeriodicMedium};
pub use planewave::{BlochParameter, Discretization, HermitianMatrix, PlaneWaveBasis};
pub use velocity::{BandPoint, GradientMethod, GradientRegistry};
