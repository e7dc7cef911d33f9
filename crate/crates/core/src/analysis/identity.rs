//! Numerical check of the τ-derivative identity
//!
//! ```text
//! ∂/∂τ [φ M̄1 φᵀ](t, τ) = φ(t, τ) (M̄2 + diag(0, C)) φᵀ(t, τ)
//! ```
//!
//! where `C` is [`correction_block`]. The left side is taken by central
//! differences of RK4 transition matrices; the right side is assembled from
//! `x(τ)` directly.

use nalgebra::DMatrix;

use super::bounds::{composite_m1, composite_m2, correction_block};
use super::transition::transition_blocks;
use crate::linalg;
use crate::model::{GainKind, Scenario};
use crate::{Error, Result};

pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// One identity evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityProbe {
    pub mu1: f64,
    pub mu2: f64,
    pub t: f64,
    pub tau: f64,
}

/// Max-abs residual of the identity at `(t, τ)` with central-difference step `dtau`.
pub fn verify_identity(s: &Scenario, mu1: f64, mu2: f64, t: f64, tau: f64, dtau: f64) -> Result<f64> {
    if s.gains.kind() != GainKind::Acceleration || !s.variant.is_second_order() {
        return Err(Error::GainKind {
            operation: "verify_identity",
            required: "acceleration",
        });
    }
    if !s.gains.is_scalar() {
        return Err(Error::NotScalar {
            operation: "verify_identity",
        });
    }
    if !(dtau > 0.0 && tau - dtau >= 0.0 && tau + dtau <= t) {
        return Err(Error::Precondition {
            operation: "verify_identity",
            reason: format!("stencil [{}, {}] leaves [0, t = {t}]", tau - dtau, tau + dtau),
        });
    }
    let n = s.dim();
    let m_bar1 = composite_m1(&s.gains, mu1, mu2)?;
    let sandwich = |phi: &DMatrix<f64>, mid: &DMatrix<f64>| phi * mid * phi.transpose();

    let ahead = transition_blocks(s, t, tau + dtau)?.phi;
    let behind = transition_blocks(s, t, tau - dtau)?.phi;
    let lhs = (sandwich(&ahead, &m_bar1) - sandwich(&behind, &m_bar1)) / (2.0 * dtau);

    let x = s.regressor.sample(tau);
    let xx = &x * x.transpose();
    let mut mid = composite_m2(&s.gains, mu1, mu2, &xx)?;
    let corr = correction_block(&s.gains, mu2, &xx)?;
    let mut br = mid.view_mut((n, n), (n, n));
    br += &corr;
    let phi = transition_blocks(s, t, tau)?.phi;
    let rhs = sandwich(&phi, &mid);
    Ok(linalg::max_abs(&(lhs - rhs)))
}

/// Residuals for a batch of probes, in probe order. Probes run on rayon
/// with the `parallel` feature.
pub fn verify_identity_batch(s: &Scenario, probes: &[IdentityProbe], dtau: f64) -> Result<Vec<f64>> {
    let eval = |p: &IdentityProbe| verify_identity(s, p.mu1, p.mu2, p.t, p.tau, dtau);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        probes.par_iter().map(eval).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        probes.iter().map(eval).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RegressorSignal, TunerVariant};

    #[test]
    fn identity_holds_on_sinusoid() {
        let s = Scenario::figure(TunerVariant::Acceleration, RegressorSignal::preset_sinusoid()).with_horizon(5.0);
        let r = verify_identity(&s, 0.0, 0.0, 4.0, 2.0, DEFAULT_FD_STEP).unwrap();
        assert!(r <= 1e-6, "residual {r}");
    }

    #[test]
    fn wrong_correction_is_detected() {
        // Dropping the correction block must break the identity.
        let s = Scenario::figure(TunerVariant::Acceleration, RegressorSignal::preset_sinusoid()).with_horizon(5.0);
        let n = 2;
        let (t, tau, d) = (4.0, 2.0, DEFAULT_FD_STEP);
        let m_bar1 = composite_m1(&s.gains, 0.0, 0.0).unwrap();
        let f = |tau: f64| {
            let phi = transition_blocks(&s, t, tau).unwrap().phi;
            &phi * &m_bar1 * phi.transpose()
        };
        let lhs = (f(tau + d) - f(tau - d)) / (2.0 * d);
        let x = s.regressor.sample(tau);
        let phi = transition_blocks(&s, t, tau).unwrap().phi;
        let rhs = &phi * composite_m2(&s.gains, 0.0, 0.0, &(&x * x.transpose())).unwrap() * phi.transpose();
        assert!(linalg::max_abs(&(lhs - rhs)) > 1e-3);
        let _ = n;
    }

    #[test]
    fn stencil_must_fit() {
        let s = Scenario::figure(TunerVariant::Acceleration, RegressorSignal::preset_sinusoid());
        assert!(verify_identity(&s, 0.0, 0.0, 1.0, 0.0, DEFAULT_FD_STEP).is_err());
        assert!(verify_identity(&s, 0.0, 0.0, 1.0, 1.0, DEFAULT_FD_STEP).is_err());
        let v = Scenario::figure(TunerVariant::Velocity, RegressorSignal::preset_sinusoid());
        assert!(verify_identity(&v, 0.0, 0.0, 2.0, 1.0, DEFAULT_FD_STEP).is_err());
    }
}
