use std::f64::consts::PI;

use nalgebra::DVector;

use super::rng::Lcg32;
use crate::{Error, Result};

/// Componentwise `a_i sin(ω_i t + φ_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinusoid {
    pub amplitude: Vec<f64>,
    pub omega: Vec<f64>,
    pub phase: Vec<f64>,
}

impl Sinusoid {
    fn eval(&self, t: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.amplitude[i] * (self.omega[i] * t + self.phase[i]).sin();
        }
    }
}

/// Deterministic regressor `t ↦ x(t) ∈ ℝⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressorSignal {
    Step {
        level: Vec<f64>,
    },
    Sinusoid(Sinusoid),
    /// `e^{αt}` times a sinusoid.
    ExpSinusoid {
        sinusoid: Sinusoid,
        growth: f64,
    },
    /// Piecewise constant on `[kΔ, (k+1)Δ)`, one LCG draw per component per
    /// interval (interval-major, component-minor), scaled to `[−scale, scale]`.
    PseudoRandom {
        n: usize,
        seed: u64,
        hold: f64,
        scale: f64,
    },
}

/// Hold-interval boundaries within this relative distance snap to the boundary,
/// so `t = k·h` grids land on the intended interval despite rounding.
const HOLD_SNAP: f64 = 1e-9;

impl RegressorSignal {
    pub fn step(level: Vec<f64>) -> Self {
        RegressorSignal::Step { level }
    }

    pub fn sinusoid(amplitude: Vec<f64>, omega: Vec<f64>, phase: Vec<f64>) -> Self {
        RegressorSignal::Sinusoid(Sinusoid {
            amplitude,
            omega,
            phase,
        })
    }

    pub fn exp_sinusoid(amplitude: Vec<f64>, omega: Vec<f64>, phase: Vec<f64>, growth: f64) -> Self {
        RegressorSignal::ExpSinusoid {
            sinusoid: Sinusoid {
                amplitude,
                omega,
                phase,
            },
            growth,
        }
    }

    pub fn pseudo_random(n: usize, seed: u64, hold: f64, scale: f64) -> Self {
        RegressorSignal::PseudoRandom { n, seed, hold, scale }
    }

    /// Default two-dimensional presets for the four signal families.
    pub fn preset_step() -> Self {
        Self::step(vec![1.0, 0.5])
    }

    pub fn preset_sinusoid() -> Self {
        Self::sinusoid(vec![1.0, 1.0], vec![1.0, 2.0], vec![0.0, PI / 3.0])
    }

    pub fn preset_exp_sinusoid() -> Self {
        Self::exp_sinusoid(vec![1.0, 1.0], vec![1.0, 2.0], vec![0.0, PI / 3.0], 0.1)
    }

    pub fn preset_pseudo_random() -> Self {
        Self::pseudo_random(2, 1, 0.1, 1.0)
    }

    /// All four presets in figure order.
    pub fn presets() -> [(&'static str, RegressorSignal); 4] {
        [
            ("step", Self::preset_step()),
            ("sinusoid", Self::preset_sinusoid()),
            ("exp_sinusoid", Self::preset_exp_sinusoid()),
            ("pseudo_random", Self::preset_pseudo_random()),
        ]
    }

    pub fn dim(&self) -> usize {
        match self {
            RegressorSignal::Step { level } => level.len(),
            RegressorSignal::Sinusoid(s) | RegressorSignal::ExpSinusoid { sinusoid: s, .. } => s.amplitude.len(),
            RegressorSignal::PseudoRandom { n, .. } => *n,
        }
    }

    /// True for signals that never switch abruptly.
    pub fn is_continuous(&self) -> bool {
        !matches!(self, RegressorSignal::PseudoRandom { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidScenario {
                field: "regressor",
                reason: reason.to_string(),
            })
        };
        match self {
            RegressorSignal::Step { level } => {
                if level.iter().any(|v| !v.is_finite()) {
                    return bad("step level must be finite");
                }
            }
            RegressorSignal::Sinusoid(s) | RegressorSignal::ExpSinusoid { sinusoid: s, .. } => {
                let n = s.amplitude.len();
                if s.omega.len() != n || s.phase.len() != n {
                    return bad("amplitude, omega and phase must have equal length");
                }
                if s.amplitude
                    .iter()
                    .chain(&s.omega)
                    .chain(&s.phase)
                    .any(|v| !v.is_finite())
                {
                    return bad("sinusoid parameters must be finite");
                }
                if let RegressorSignal::ExpSinusoid { growth, .. } = self {
                    if !(growth.is_finite() && *growth >= 0.0) {
                        return bad("growth rate must be finite and nonnegative");
                    }
                }
            }
            RegressorSignal::PseudoRandom { hold, scale, .. } => {
                if !(hold.is_finite() && *hold > 0.0) {
                    return bad("hold interval must be positive");
                }
                if !(scale.is_finite() && *scale >= 0.0) {
                    return bad("scale must be finite and nonnegative");
                }
            }
        }
        Ok(())
    }

    /// `x(t)` written into `out` (length `dim()`).
    pub fn sample_into(&self, t: f64, out: &mut [f64]) {
        self.eval(t, false, out)
    }

    /// Left limit `x(t⁻)`; equals [`sample_into`](Self::sample_into) except at
    /// pseudorandom switching instants.
    pub fn sample_left_into(&self, t: f64, out: &mut [f64]) {
        self.eval(t, true, out)
    }

    pub fn sample(&self, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.sample_into(t, out.as_mut_slice());
        out
    }

    pub fn sample_left(&self, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.sample_left_into(t, out.as_mut_slice());
        out
    }

    fn eval(&self, t: f64, left: bool, out: &mut [f64]) {
        match self {
            RegressorSignal::Step { level } => out.copy_from_slice(level),
            RegressorSignal::Sinusoid(s) => s.eval(t, out),
            RegressorSignal::ExpSinusoid { sinusoid, growth } => {
                sinusoid.eval(t, out);
                let g = (growth * t).exp();
                out.iter_mut().for_each(|v| *v *= g);
            }
            RegressorSignal::PseudoRandom { n, seed, hold, scale } => {
                let k = hold_index(t / hold, left);
                for (i, o) in out.iter_mut().enumerate() {
                    let u = Lcg32::uniform_at(*seed, k * (*n as u64) + i as u64);
                    *o = scale * (2.0 * u - 1.0);
                }
            }
        }
    }
}

/// Interval index for `s = t/Δ`, snapping near-integers onto the boundary.
fn hold_index(s: f64, left: bool) -> u64 {
    if s <= 0.0 {
        return 0;
    }
    let nearest = s.round();
    if (s - nearest).abs() <= HOLD_SNAP * nearest.max(1.0) {
        let k = nearest as u64;
        if left {
            k.saturating_sub(1)
        } else {
            k
        }
    } else {
        s.floor() as u64
    }
}

/// Free-function form of [`RegressorSignal::sample`].
pub fn sample_regressor(r: &RegressorSignal, t: f64) -> DVector<f64> {
    r.sample(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_is_constant() {
        let r = RegressorSignal::step(vec![1.0, 0.5]);
        assert_eq!(r.sample(7.3).as_slice(), &[1.0, 0.5]);
    }

    #[test]
    fn sinusoid_vanishes_at_zero_phase_origin() {
        let r = RegressorSignal::sinusoid(vec![1.0, 1.0], vec![1.0, 2.0], vec![0.0, 0.0]);
        assert_eq!(r.sample(0.0).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn pseudo_random_first_value() {
        let r = RegressorSignal::pseudo_random(2, 1, 0.1, 1.0);
        let x = r.sample(0.0);
        assert!((x[0] - (2.0 * (1_015_568_748.0 / 4_294_967_296.0) - 1.0)).abs() < 1e-15);
        assert!((x[0] + 0.527_089).abs() < 1e-6);
    }

    #[test]
    fn pseudo_random_holds_and_switches() {
        let r = RegressorSignal::pseudo_random(2, 9, 0.1, 2.0);
        let a = r.sample(0.0);
        assert_eq!(r.sample(0.0999), a);
        let b = r.sample(0.1);
        assert_ne!(a, b);
        // 3·0.1 is not exactly representable; the grid point still belongs to interval 3.
        let h = 1e-3;
        assert_eq!(r.sample(300.0 * h), r.sample(0.3005));
        assert_eq!(r.sample_left(300.0 * h), r.sample(0.2995));
        for t in [0.0, 0.05, 1.234, 17.0] {
            assert!(r.sample(t).iter().all(|v| v.abs() <= 2.0));
        }
    }

    #[test]
    fn exp_sinusoid_grows() {
        let r = RegressorSignal::exp_sinusoid(vec![1.0], vec![0.0], vec![PI / 2.0], 0.5);
        assert!((r.sample(2.0)[0] - 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(RegressorSignal::pseudo_random(2, 1, 0.0, 1.0).validate().is_err());
        assert!(RegressorSignal::exp_sinusoid(vec![1.0], vec![1.0], vec![0.0], -1.0)
            .validate()
            .is_err());
        assert!(RegressorSignal::sinusoid(vec![1.0, 1.0], vec![1.0], vec![0.0, 0.0])
            .validate()
            .is_err());
        for (_, r) in RegressorSignal::presets() {
            r.validate().unwrap();
        }
    }
}
