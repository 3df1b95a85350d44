//! Solvers for the dbar- and d-equations in thin tubular neighborhoods of
//! totally real submanifolds of C^n, built on a family of delta-dependent
//! integral kernels (Bochner-Martinelli near the diagonal, Henkin-type near
//! the tube boundary), together with a Moser-flow pipeline that upgrades
//! holomorphic approximations of diffeomorphisms to volume- or
//! symplectic-form-preserving ones.
//!
//! The crate is organized around the solver stack:
//!
//! - [`geometry`]: built-in totally real submanifolds, tubes, distance and
//!   retraction machinery, quadrature grids, Riesz projector.
//! - [`forms`]: (p,q)-forms with symbolic or numeric coefficients, the
//!   operators d, del, dbar, contraction, pullback, norms, and the homotopy
//!   operator along the tube retraction.
//! - [`kernels`]: support functions, patched Leray maps and the Koppelman
//!   kernel family K_{p,q}.
//! - [`dbar`]: the delta-family solution operator for dbar v = u and the
//!   estimate-measurement harness.
//! - [`dholo`]: holomorphic solutions of dv = u via Serre-type stripping and
//!   exact manifold Hodge solves.
//! - [`moser`]: dbar-flat extensions, holomorphic approximation of
//!   diffeomorphisms, Moser correction and omega-flow lifting.
//! - [`cli`]: batch runner, config parsing, CSV emission, run manifests.

pub mod cli;
pub mod dbar;
pub mod dholo;
pub mod error;
pub mod expr;
pub mod forms;
pub mod geometry;
pub mod kernels;
pub mod linalg;
pub mod moser;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Imaginary unit.
pub const I: C64 = C64::new(0.0, 1.0);
