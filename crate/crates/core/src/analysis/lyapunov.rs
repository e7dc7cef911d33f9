use nalgebra::{DMatrix, DVector};

use crate::linalg;
use crate::model::{GainKind, TunerGains, TunerVariant};
use crate::{Error, Result};

/// Quadratic Lyapunov function `V = zᵀ P_V z` of the error state.
///
/// Velocity tuners: `P_V = M⁻¹/2`. Accelerating tuner, with `z = [q; q̇]`:
/// `P_V = [[M2, M1⁻¹/2], [M1⁻¹/2, M3]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSpec {
    pub kind: GainKind,
    pub p_v: DMatrix<f64>,
    /// `D = 2(M2 M1 M3 + M3 M1 M2) − M1⁻¹`, the q̇ dissipation weight
    /// (empty for velocity tuners). `3I` for identity gains.
    pub dissipation: DMatrix<f64>,
    /// `2 M1 M3`, so the modified error is `xᵀ(q + 2M1M3 q̇)`.
    pub modified_gain: DMatrix<f64>,
}

fn inverse(name: &'static str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone().try_inverse().ok_or(Error::Precondition {
        operation: "lyapunov",
        reason: format!("gain {name} is singular"),
    })
}

impl LyapunovSpec {
    pub fn new(g: &TunerGains) -> Result<Self> {
        match g {
            TunerGains::Velocity { m } => Ok(LyapunovSpec {
                kind: GainKind::Velocity,
                p_v: inverse("M", m)? * 0.5,
                dissipation: DMatrix::zeros(0, 0),
                modified_gain: DMatrix::zeros(0, 0),
            }),
            TunerGains::Acceleration { m1, m2, m3 } => {
                let n = m1.nrows();
                let half_inv = inverse("M1", m1)? * 0.5;
                let mut p_v = DMatrix::zeros(2 * n, 2 * n);
                p_v.view_mut((0, 0), (n, n)).copy_from(m2);
                p_v.view_mut((0, n), (n, n)).copy_from(&half_inv);
                p_v.view_mut((n, 0), (n, n)).copy_from(&half_inv);
                p_v.view_mut((n, n), (n, n)).copy_from(m3);
                let cross = m2 * m1 * m3 + m3 * m1 * m2;
                Ok(LyapunovSpec {
                    kind: GainKind::Acceleration,
                    p_v,
                    dissipation: linalg::symmetrize(&(cross * 2.0 - half_inv * 2.0)),
                    modified_gain: m1 * m3 * 2.0,
                })
            }
        }
    }

    pub fn state_dim(&self) -> usize {
        self.p_v.nrows()
    }

    pub fn value(&self, z: &DVector<f64>) -> f64 {
        z.dot(&(&self.p_v * z))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.p_v)
    }

    /// `√(V / λ_min(P_V))`, an upper bound on `‖z‖` (and hence `‖q‖`).
    pub fn norm_bound(&self, v: f64) -> f64 {
        (v / self.min_eigenvalue()).sqrt()
    }

    /// `xᵀ(q + 2M1M3q̇)` for the accelerating tuner, `xᵀq` otherwise.
    pub fn modified_error(&self, z: &DVector<f64>, x: &DVector<f64>) -> f64 {
        let n = x.len();
        let q = z.rows(0, n);
        match self.kind {
            GainKind::Velocity => x.dot(&q),
            GainKind::Acceleration => x.dot(&(q + &self.modified_gain * z.rows(n, n))),
        }
    }

    /// `q̇ᵀ D q̇` (zero for velocity tuners).
    pub fn dissipation_rate(&self, z: &DVector<f64>) -> f64 {
        match self.kind {
            GainKind::Velocity => 0.0,
            GainKind::Acceleration => {
                let n = z.len() / 2;
                let dq = z.rows(n, n);
                dq.dot(&(&self.dissipation * dq))
            }
        }
    }

    /// Error-energy integrand whose integral together with the dissipation
    /// accounts for the decrease of `V`: `(xᵀ(q+2M1M3q̇))²` for the accelerating
    /// tuner, `(xᵀq)²` for the gradient tuner and `(xᵀq)²/(1+xᵀx)` for the
    /// normalized one.
    pub fn error_energy_rate(&self, variant: TunerVariant, z: &DVector<f64>, x: &DVector<f64>) -> f64 {
        let e = self.modified_error(z, x);
        match variant {
            TunerVariant::NormalizedVelocity => e * e / (1.0 + x.dot(x)),
            _ => e * e,
        }
    }
}

fn check_state(spec: &LyapunovSpec, z: &DVector<f64>) -> Result<()> {
    if z.len() != spec.state_dim() {
        return Err(Error::Dimension {
            context: "error state",
            expected: spec.state_dim(),
            actual: z.len(),
        });
    }
    Ok(())
}

/// `V` at the error state `z` (`q`, or `[q; q̇]` for the accelerating tuner).
pub fn lyapunov(z: &DVector<f64>, g: &TunerGains) -> Result<f64> {
    let spec = LyapunovSpec::new(g)?;
    check_state(&spec, z)?;
    Ok(spec.value(z))
}

/// `V̇` along noise-free trajectories.
///
/// Gradient tuner: `−(xᵀq)²`. Accelerating tuner:
/// `−q̇ᵀ D q̇ − (xᵀ(q + 2M1M3q̇))²`, which for identity gains is
/// `−3q̇ᵀq̇ − ((q+2q̇)ᵀx)²`.
pub fn lyapunov_rate(z: &DVector<f64>, x: &DVector<f64>, g: &TunerGains) -> Result<f64> {
    let variant = match g.kind() {
        GainKind::Velocity => TunerVariant::Velocity,
        GainKind::Acceleration => TunerVariant::Acceleration,
    };
    lyapunov_rate_for(variant, z, x, g)
}

/// As [`lyapunov_rate`], also covering the normalized gradient tuner.
pub fn lyapunov_rate_for(variant: TunerVariant, z: &DVector<f64>, x: &DVector<f64>, g: &TunerGains) -> Result<f64> {
    if g.kind() != variant.gain_kind() {
        return Err(Error::GainKind {
            operation: "lyapunov_rate",
            required: if variant.is_second_order() {
                "acceleration"
            } else {
                "velocity"
            },
        });
    }
    let spec = LyapunovSpec::new(g)?;
    check_state(&spec, z)?;
    if x.len() != g.dim() {
        return Err(Error::Dimension {
            context: "regressor",
            expected: g.dim(),
            actual: x.len(),
        });
    }
    Ok(-spec.dissipation_rate(z) - spec.error_energy_rate(variant, z, x))
}
