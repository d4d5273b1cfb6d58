//! Nonholonomic mechanics on coordinate charts.
//!
//! Constrained Lagrangian dynamics via Lagrange multipliers, numerical
//! verification of Hamilton–Jacobi conditions, symmetry classification and
//! Chaplygin reduction. Every coordinate expression is a [`diffcalc::SmoothMap`],
//! differentiated exactly with forward-mode dual numbers.

pub mod constraints;
pub mod diffcalc;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod hamjac;
pub mod mechanics;
pub mod reduction;
pub mod report;
pub mod systems;

pub use error::{NhError, Result};
