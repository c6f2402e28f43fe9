//! Spectral simulator and analysis toolkit for the Benjamin–Bona–Mahony
//! equation with fading memory,
//!
//!   B u_t + u_x + ∫₀^∞ μ(s) A η(s) ds + u u_x = f,     η_t = -η_s + u,
//!
//! on an interval with Dirichlet conditions, where A = -d²/dx², B = I + A and
//! η is the integrated past of u. The crate provides the spatial
//! discretization, two history backends (convolution quadrature on an s-grid
//! and the exact exponential-mode reduction for Prony kernels), dissipative
//! time stepping, energy/dissipation audits, the weighted Lyapunov functional
//! family and its invariant-set machinery, a quadratic comparison principle
//! for Riccati-type differential inequalities, an exponential/compact solution
//! decomposition, and an ensemble mode that approximates the global attractor.

// Validation guards are written `!(x > 0.0)` on purpose: the negated form
// also rejects NaN, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod decomposition;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod functionals;
pub mod history;
pub mod kernel;
pub mod persist;
pub mod report;
pub mod riccati;
pub mod spectral;

pub use error::{Error, Result};
pub use spectral::{Basis, DiagonalOp, DomainSpec, ForceData, SpectralField};
