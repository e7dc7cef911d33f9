//! Domain types shared across the crate: tuner gains, regressor signals,
//! noise settings and scenarios.

mod gains;
mod regressor;
pub mod rng;
mod scenario;

pub use gains::{validate_gains, GainCondition, GainKind, ScalarGains, TunerGains, ValidationReport, Violation};
pub use regressor::{sample_regressor, RegressorSignal, Sinusoid};
pub use scenario::{
    NoiseModel, Scenario, TunerVariant, DEFAULT_STEP_DETERMINISTIC, DEFAULT_STEP_STOCHASTIC, FIGURE_HORIZON, FIGURE_Q0,
};
