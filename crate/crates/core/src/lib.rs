#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Numerical laboratory for gradient ("velocity") and second-order
//! ("accelerating") parameter tuners.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: gains with their validity checks, regressor families, the
//!   seeded generators and the [`Scenario`](model::Scenario) that ties them together.
//! - [`tuners`]: the tuner vector fields in implementable form and the stacked
//!   linear time-varying error system.
//! - [`sim`]: RK4 deterministic runs with Lyapunov/L2 monitors, Euler–Maruyama
//!   noisy runs and the Monte Carlo moment estimator.
//! - [`analysis`]: Lyapunov functions, transition matrices, analytic covariance
//!   propagation, the integration identity and the steady-state covariance bounds.
//! - [`cli`]: the `tuner-lab` scenario runner (config parsing, CSV and SVG output).
//!
//! Monte Carlo trials run on rayon when the `parallel` feature (default) is
//! enabled and sequentially otherwise; both paths produce bitwise-identical
//! reports.

pub mod analysis;
pub mod cli;
mod error;
pub mod linalg;
pub mod model;
pub mod sim;
pub mod tuners;

pub use error::{Error, Result};
