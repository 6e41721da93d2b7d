//! Desk-scale laboratory for velocity tracking of 2D incompressible flow with
//! box-constrained (bang-bang) force controls.
//!
//! The crate is organized bottom-up:
//!
//! - [`grid`], [`field`]: MAC staggered grid and the discrete function types
//!   (cell scalars, face velocities, trajectories, cell-centered controls).
//! - [`ops`]: divergence, gradient, viscous and convective stencils together
//!   with their exact transposes, and the skew-symmetric trilinear form.
//! - [`spectral`], [`poisson`]: fast sine/cosine transforms, direct Helmholtz
//!   solves and the conjugate-gradient Leray projection.
//! - [`ns`], [`oseen`]: the nonlinear state solver and the linearized /
//!   second-linearized / adjoint solvers around a frozen trajectory. The
//!   adjoint is the exact transpose of the discrete forward step maps.
//! - [`control`], [`objective`], [`optimizer`]: the control set, the tracking
//!   objective with its first and second variations, stationarity residuals,
//!   bang-bang extraction, and conditional-gradient / projected-gradient
//!   solvers with a Tikhonov continuation path.
//! - [`perturb`], [`stability`]: perturbation generation and the empirical
//!   Hölder-rate experiments (growth exponent probe, perturbation sweeps,
//!   gap diagnostics, curvature probe).
//! - [`boxprob`]: finite-dimensional box problems where perturbed variational
//!   inequalities are solved exhaustively by active-set enumeration, used to
//!   verify the abstract subregularity/growth implications by brute force.
//! - [`verify`]: built-in check suites shared by tests and the CLI.

pub mod boxprob;
pub mod control;
pub mod error;
pub mod field;
pub mod grid;
pub mod io;
pub mod norms;
pub mod ns;
pub mod objective;
pub mod ops;
pub mod optimizer;
pub mod oseen;
pub mod perturb;
pub mod poisson;
pub mod spectral;
pub mod stability;
pub mod verify;

pub use error::{Error, Result};
pub use field::{CellField2, ScalarField, StaggeredField, Trajectory};
pub use grid::Grid;
