use nalgebra::DMatrix;

use crate::model::Scenario;
use crate::sim::system::{rk4_linear, ErrorSystem};
use crate::{Error, Result};

/// State transition matrix `φ(t, τ)` of the error system, with block access
/// for the stacked accelerating-tuner state.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBlocks {
    pub phi: DMatrix<f64>,
    /// Parameter dimension `n`.
    pub n: usize,
}

impl TransitionBlocks {
    pub fn is_stacked(&self) -> bool {
        self.phi.nrows() == 2 * self.n
    }

    fn block(&self, r: usize, c: usize) -> Option<DMatrix<f64>> {
        if !self.is_stacked() && (r, c) != (0, 0) {
            return None;
        }
        Some(self.phi.view((r * self.n, c * self.n), (self.n, self.n)).into_owned())
    }

    /// `φ11`, or the whole `φ` for velocity tuners.
    pub fn phi11(&self) -> DMatrix<f64> {
        self.block(0, 0).expect("top-left block always exists")
    }

    pub fn phi12(&self) -> Option<DMatrix<f64>> {
        self.block(0, 1)
    }

    pub fn phi21(&self) -> Option<DMatrix<f64>> {
        self.block(1, 0)
    }

    pub fn phi22(&self) -> Option<DMatrix<f64>> {
        self.block(1, 1)
    }

    /// Top block row `[φ11 φ12]` (`φ` for velocity tuners).
    pub fn top_row(&self) -> DMatrix<f64> {
        self.phi.rows(0, self.n).into_owned()
    }
}

/// Integrates `∂φ(s, τ)/∂s = A(s) φ(s, τ)` from `φ(τ, τ) = I` up to `s = t` with
/// RK4, using the largest uniform step not exceeding the scenario step.
pub fn transition_blocks(s: &Scenario, t: f64, tau: f64) -> Result<TransitionBlocks> {
    s.validate()?;
    if !(tau >= 0.0 && tau <= t && t.is_finite()) {
        return Err(Error::Precondition {
            operation: "transition_blocks",
            reason: format!("need 0 <= tau <= t, got tau = {tau}, t = {t}"),
        });
    }
    let mut sys = ErrorSystem::new(s)?;
    let d = sys.dim();
    let mut phi = DMatrix::identity(d, d);
    let span = t - tau;
    if span > 0.0 {
        let steps = ((span / s.step) - 1e-9).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        let mut mats = sys.zeros();
        for k in 0..steps {
            sys.load_step(tau + k as f64 * h, h, &mut mats);
            phi = rk4_linear(&mats, h, &phi);
        }
    }
    Ok(TransitionBlocks { phi, n: s.dim() })
}
