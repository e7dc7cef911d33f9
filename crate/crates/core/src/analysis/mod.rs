//! Stability and covariance analysis of the tuners.

mod bounds;
mod covariance;
mod identity;
mod lyapunov;
mod pe;
mod transition;

pub use bounds::{
    approx_mu1, bound_approx, bound_exact, composite_m1, composite_m2, correction_block, exact_coefficient, BoundParams,
};
pub use covariance::{
    covariance_ode, covariance_ode_strided, velocity_covariance_closed_form, velocity_covariance_exact,
    AnalyticCovariance,
};
pub use identity::{verify_identity, verify_identity_batch, IdentityProbe, DEFAULT_FD_STEP};
pub use lyapunov::{lyapunov, lyapunov_rate, lyapunov_rate_for, LyapunovSpec};
pub use pe::pe_measure;
pub use transition::{transition_blocks, TransitionBlocks};
