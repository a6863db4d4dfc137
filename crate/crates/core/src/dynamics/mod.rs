//! Noncanonical Hamiltonian systems in 3D and the canonical chart of the
//! distorted rigid body.
//!
//! A system is described by three scalar fields: an integration factor λ,
//! a Casimir C and a Hamiltonian H, with phase-space velocity
//! `v = λ ∇C × ∇H`. The kernel `ξ = λ∇C` of the Poisson operator is
//! orthogonal to every orbit, and the measure `λ⁻¹ dx∧dy∧dz` is preserved.
//!
//! For the rigid body with `C = |x|²/2` and `λ = e^{z²/2}` the constant-C
//! surfaces carry the chart `(χ, z)` with `χ = e^{-z²/2} φ`, on which the
//! flow is canonical with unit Jacobian; see [`CanonicalChart`].

mod chart;
mod orbit;
mod system;
mod vec3;

pub use chart::{
    from_canonical, to_canonical, CanonicalChart, CanonicalPoint, ChartHamiltonian, WallTaper,
};
pub use orbit::{integrate_chart_orbit, integrate_orbit, suggested_dt, Trajectory};
pub use system::{
    curl_fd, divergence_fd, jacobi_residual_of, ConstrainedSystem3D, Inertia, ScalarField,
};
pub use vec3::Vec3;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("field `{field}` is not finite at {point}")]
    NonFinite { field: &'static str, point: Vec3 },
    #[error("point {0} has non-finite coordinates")]
    InvalidPoint(Vec3),
    #[error("coordinate singularity: x = y = 0 has no chart angle")]
    CoordinateSingularity,
    #[error("point (χ = {chi}, z = {z}) lies outside the chart domain")]
    OutOfDomain { chi: f64, z: f64 },
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("moments of inertia must be positive and finite, got {0:?}")]
    InvalidInertia([f64; 3]),
}

pub type Result<T> = std::result::Result<T, DynamicsError>;
