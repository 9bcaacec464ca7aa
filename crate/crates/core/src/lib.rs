//! Numerical core for the one-dimensional diffusive wave (DSW) model.
//!
//! The crate is `no_std` (it only needs `alloc`) and contains:
//!
//! * [`mesh`]: P1 finite elements on a uniform 1D mesh, tridiagonal algebra,
//!   norms and the H¹ (Helmholtz) gradient smoother.
//! * [`model`]: the Manning-type diffusion coefficient, the discrete
//!   nonlinear residual, its linearization and the loads of the sensitivity
//!   and adjoint problems.
//! * [`integrator`]: generalized-α time stepping for the nonlinear forward
//!   problem and for the linear sensitivity / adjoint problems.
//! * [`inverse`]: Tikhonov-regularized conjugate-gradient recovery of the
//!   roughness coefficient.
//! * [`problems`]: the benchmark coefficient profiles and initial state.
#![no_std]
// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod integrator;
pub mod inverse;
pub mod mesh;
pub mod model;
pub mod problems;

pub use error::{Error, Result};
pub use integrator::{genalpha_params, GenAlphaConfig, GenAlphaParams, TimeGrid};
pub use inverse::{InversionConfig, InversionReport, IterationRecord, Termination};
pub use mesh::{Mesh1D, NodalField, SpaceTimeField, TriDiagMatrix};
pub use model::{LinearizedOperator, ModelParams, SpaceTimeFn};
pub use problems::ExampleId;
