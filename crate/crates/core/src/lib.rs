//! Regularized momentum descent-ascent methods for stochastic
//! nonconvex-concave minimax problems
//!
//! ```text
//! min_{x in X} max_{y in Y} g(x, y) = E[G(x, y; zeta)]
//! ```
//!
//! The dual block is Tikhonov-regularized with a decaying weight `rho_k`, and
//! both blocks are driven by recursive variance-reduced gradient estimators
//! followed by projected (or proximal) momentum steps. The crate also ships
//! the projections and proximity operators, parameter schedules,
//! stationarity-gap metrics, a plain stochastic descent-ascent baseline, a
//! small zoo of test problems, and an experiment harness.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod schedules;
pub mod solver;

pub use error::{Error, Result};
