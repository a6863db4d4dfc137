//! Diffusion of topologically constrained Hamiltonian systems on their
//! invariant measure.
//!
//! The crate is organised around the pieces of one numerical experiment:
//!
//! * [`dynamics`]: noncanonical 3D systems `v = λ∇C×∇H`, their structural
//!   checks, and the canonical `(χ, z)` chart of the distorted rigid body.
//! * [`field`]: uniform cell-centred grids and probability densities.
//! * [`fokker_planck`]: conservative finite-volume Fokker–Planck solver on
//!   the chart.
//! * [`entropy`]: Σ on the invariant measure, the Cartesian entropy S̃,
//!   entropy production and entropy flow.
//! * [`sde`]: Euler–Maruyama particle ensemble used as an independent
//!   oracle for the solver.
//! * [`magnetosphere`]: μ-conserving diffusion in a dipole field.
//! * [`cli`]: configuration, experiment runners, CSV and SVG output.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod entropy;
pub mod field;
pub mod fokker_planck;
pub mod magnetosphere;
pub mod sde;

pub use dynamics::{CanonicalChart, ChartHamiltonian, ConstrainedSystem3D, Inertia, Vec3};
pub use entropy::{EntropyRow, EntropyTrace, JacobianField};
pub use field::{DensityField2D, Grid2D};
pub use fokker_planck::{FpOperator, NoiseSpec, SolverConfig};
