//! Time integration of the tuner dynamics.
//!
//! Noise-free runs use classical RK4 on the implementable tuner state; noisy
//! runs use Euler–Maruyama on the error state with the white noise entering
//! only through Brownian increments `σ_w ΔW`, `ΔW ~ N(0, h)`.

mod montecarlo;
pub(crate) mod system;
mod trajectory;

pub use montecarlo::{monte_carlo, monte_carlo_with, CovarianceReport, Execution};
pub use trajectory::{integrate_deterministic, integrate_stochastic, Channels, Trajectory};

/// Runs abort once the state norm exceeds this value.
pub const OVERFLOW_LIMIT: f64 = 1e12;
