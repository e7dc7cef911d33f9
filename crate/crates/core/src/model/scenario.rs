use nalgebra::DVector;

use super::{GainKind, RegressorSignal, TunerGains};
use crate::{Error, Result};

/// White measurement noise with covariance `σ_w² δ(t−τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma_w: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel { sigma_w: 0.0, seed: 0 }
    }

    pub fn white(sigma_w: f64, seed: u64) -> Self {
        NoiseModel { sigma_w, seed }
    }

    pub fn is_noise_free(&self) -> bool {
        self.sigma_w == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TunerVariant {
    Velocity,
    NormalizedVelocity,
    Acceleration,
}

impl TunerVariant {
    pub fn gain_kind(self) -> GainKind {
        match self {
            TunerVariant::Velocity | TunerVariant::NormalizedVelocity => GainKind::Velocity,
            TunerVariant::Acceleration => GainKind::Acceleration,
        }
    }

    pub fn is_second_order(self) -> bool {
        self == TunerVariant::Acceleration
    }

    pub fn name(self) -> &'static str {
        match self {
            TunerVariant::Velocity => "velocity",
            TunerVariant::NormalizedVelocity => "normalized",
            TunerVariant::Acceleration => "accel",
        }
    }
}

/// Everything needed to run one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// True parameters `p`.
    pub p: DVector<f64>,
    /// Initial estimate `p̂(0)`.
    pub phat0: DVector<f64>,
    /// Initial estimate derivative (acceleration variant only).
    pub dphat0: DVector<f64>,
    pub gains: TunerGains,
    pub regressor: RegressorSignal,
    pub noise: NoiseModel,
    pub horizon: f64,
    pub step: f64,
    pub variant: TunerVariant,
}

/// Initial parameter error used by the figure presets.
pub const FIGURE_Q0: [f64; 2] = [1.0, -0.8];
pub const FIGURE_HORIZON: f64 = 30.0;
pub const DEFAULT_STEP_DETERMINISTIC: f64 = 1e-3;
pub const DEFAULT_STEP_STOCHASTIC: f64 = 1e-4;

impl Scenario {
    /// Noise-free scenario with `p̂(0) = p + q0`, `dp̂(0) = 0`.
    pub fn from_error(
        variant: TunerVariant,
        gains: TunerGains,
        regressor: RegressorSignal,
        p: DVector<f64>,
        q0: DVector<f64>,
        horizon: f64,
        step: f64,
    ) -> Self {
        let n = p.len();
        Scenario {
            phat0: &p + q0,
            dphat0: DVector::zeros(n),
            p,
            gains,
            regressor,
            noise: NoiseModel::none(),
            horizon,
            step,
            variant,
        }
    }

    /// Figure preset: two-dimensional, identity gains, `q(0) = [1, −0.8]`, T = 30 s.
    pub fn figure(variant: TunerVariant, regressor: RegressorSignal) -> Self {
        let gains = match variant.gain_kind() {
            GainKind::Velocity => TunerGains::identity_velocity(2),
            GainKind::Acceleration => TunerGains::identity_acceleration(2),
        };
        Self::from_error(
            variant,
            gains,
            regressor,
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_row_slice(&FIGURE_Q0),
            FIGURE_HORIZON,
            DEFAULT_STEP_DETERMINISTIC,
        )
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    /// Dimension of the integrated error state (`n` or `2n`).
    pub fn state_dim(&self) -> usize {
        if self.variant.is_second_order() {
            2 * self.dim()
        } else {
            self.dim()
        }
    }

    /// Number of steps `K`; the grid is `t_k = k·h`, `k = 0..=K`.
    pub fn num_steps(&self) -> usize {
        (self.horizon / self.step + 1e-9).floor() as usize
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn q0(&self) -> DVector<f64> {
        &self.phat0 - &self.p
    }

    /// Stacked initial error `[q(0); q̇(0)]` (or `q(0)` for velocity tuners).
    pub fn z0(&self) -> DVector<f64> {
        let q0 = self.q0();
        if self.variant.is_second_order() {
            let n = self.dim();
            let mut z = DVector::zeros(2 * n);
            z.rows_mut(0, n).copy_from(&q0);
            z.rows_mut(n, n).copy_from(&self.dphat0);
            z
        } else {
            q0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let invalid = |field: &'static str, reason: String| Err(Error::InvalidScenario { field, reason });
        if n == 0 {
            return invalid("p", "dimension must be at least 1".into());
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return invalid("T", format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.step.is_finite() && self.step > 0.0 && self.step <= self.horizon) {
            return invalid("h", format!("step must satisfy 0 < h <= T, got {}", self.step));
        }
        if !(self.noise.sigma_w.is_finite() && self.noise.sigma_w >= 0.0) {
            return invalid("sigma_w", format!("must be nonnegative, got {}", self.noise.sigma_w));
        }
        for (field, v) in [("phat0", &self.phat0), ("dphat0", &self.dphat0)] {
            if v.len() != n {
                return invalid(field, format!("expected length {n}, got {}", v.len()));
            }
        }
        if self.gains.dim() != n {
            return invalid("gains", format!("expected dimension {n}, got {}", self.gains.dim()));
        }
        if self.gains.kind() != self.variant.gain_kind() {
            return invalid(
                "gains",
                format!(
                    "{:?} gains do not fit the {} tuner",
                    self.gains.kind(),
                    self.variant.name()
                ),
            );
        }
        if self.regressor.dim() != n {
            return invalid(
                "regressor",
                format!("expected dimension {n}, got {}", self.regressor.dim()),
            );
        }
        self.regressor.validate()?;
        if self
            .p
            .iter()
            .chain(self.phat0.iter())
            .chain(self.dphat0.iter())
            .any(|v| !v.is_finite())
        {
            return invalid("p", "parameters must be finite".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_preset_is_valid() {
        for variant in [
            TunerVariant::Velocity,
            TunerVariant::NormalizedVelocity,
            TunerVariant::Acceleration,
        ] {
            let s = Scenario::figure(variant, RegressorSignal::preset_sinusoid());
            s.validate().unwrap();
            assert_eq!(s.q0().as_slice(), &FIGURE_Q0);
            assert_eq!(s.num_steps(), 30_000);
        }
    }

    #[test]
    fn bad_step_names_h() {
        let s = Scenario::figure(TunerVariant::Velocity, RegressorSignal::preset_step()).with_step(0.0);
        match s.validate() {
            Err(Error::InvalidScenario { field, .. }) => assert_eq!(field, "h"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mismatched_gain_kind_is_rejected() {
        let mut s = Scenario::figure(TunerVariant::Acceleration, RegressorSignal::preset_step());
        s.gains = TunerGains::identity_velocity(2);
        assert!(s.validate().is_err());
    }

    #[test]
    fn stacked_initial_state() {
        let mut s = Scenario::figure(TunerVariant::Acceleration, RegressorSignal::preset_step());
        s.dphat0 = DVector::from_vec(vec![0.5, 0.25]);
        assert_eq!(s.z0().as_slice(), &[1.0, -0.8, 0.5, 0.25]);
    }
}
