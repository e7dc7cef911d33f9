//! Tuner vector fields and the stacked error system.
//!
//! The fields are written in implementable form: they see the measurement `y`
//! and the estimate, never the true parameters. The stacked matrices describe
//! the same dynamics in error coordinates `q = p̂ − p`, with the measurement
//! noise entering through `B`.

use nalgebra::{DMatrix, DVector};

use crate::model::{GainKind, TunerGains, TunerVariant};
use crate::{Error, Result};

/// Estimate state: `p̂`, plus `dp̂` for the accelerating tuner.
#[derive(Debug, Clone, PartialEq)]
pub struct TunerState {
    pub phat: DVector<f64>,
    pub dphat: Option<DVector<f64>>,
}

impl TunerState {
    pub fn first_order(phat: DVector<f64>) -> Self {
        TunerState { phat, dphat: None }
    }

    pub fn second_order(phat: DVector<f64>, dphat: DVector<f64>) -> Self {
        TunerState {
            phat,
            dphat: Some(dphat),
        }
    }

    pub fn dim(&self) -> usize {
        self.phat.len()
    }
}

fn check_len(context: &'static str, v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension {
            context,
            expected: n,
            actual: v.len(),
        });
    }
    Ok(())
}

fn check_square(context: &'static str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension {
            context,
            expected: n,
            actual: m.nrows(),
        });
    }
    Ok(())
}

/// Gradient tuner: `−M x (xᵀp̂ − y)`.
pub fn velocity_field(phat: &DVector<f64>, x: &DVector<f64>, y: f64, m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = phat.len();
    check_len("regressor", x, n)?;
    check_square("gain M", m, n)?;
    let e = x.dot(phat) - y;
    Ok(m * x * (-e))
}

/// Normalized gradient tuner: `−M x (xᵀp̂ − y) / (1 + xᵀx)`.
pub fn normalized_velocity_field(
    phat: &DVector<f64>,
    x: &DVector<f64>,
    y: f64,
    m: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    Ok(velocity_field(phat, x, y, m)? / (1.0 + x.dot(x)))
}

/// Accelerating tuner: `−M1 (x (xᵀp̂ − y) + 2 (M2 + x xᵀ M1 M3) dp̂)`.
pub fn acceleration_field(state: &TunerState, x: &DVector<f64>, y: f64, g: &TunerGains) -> Result<DVector<f64>> {
    let TunerGains::Acceleration { m1, m2, m3 } = g else {
        return Err(Error::GainKind {
            operation: "acceleration_field",
            required: "acceleration",
        });
    };
    let n = state.dim();
    let dphat = state.dphat.as_ref().ok_or(Error::Precondition {
        operation: "acceleration_field",
        reason: "state has no derivative component".into(),
    })?;
    check_len("estimate derivative", dphat, n)?;
    check_len("regressor", x, n)?;
    check_square("gain M1", m1, n)?;
    let e = x.dot(&state.phat) - y;
    let damping = m2 * dphat + x * x.dot(&(m1 * m3 * dphat));
    Ok(-(m1 * (x * e + damping * 2.0)))
}

/// Drift `A` and noise input `B` of the error dynamics `ż = A z + B w`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedMatrices {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Stacked system for the gain kind: `[[0, I], [−M1xxᵀ, −2M1(M2 + xxᵀM1M3)]]`,
/// `[0; M1x]` for the accelerating tuner, `−Mxxᵀ`, `Mx` for the gradient one.
pub fn stacked_system(x: &DVector<f64>, g: &TunerGains) -> Result<StackedMatrices> {
    let variant = match g.kind() {
        GainKind::Velocity => TunerVariant::Velocity,
        GainKind::Acceleration => TunerVariant::Acceleration,
    };
    stacked_system_for(variant, x, g)
}

/// As [`stacked_system`], also covering the normalized gradient tuner.
pub fn stacked_system_for(variant: TunerVariant, x: &DVector<f64>, g: &TunerGains) -> Result<StackedMatrices> {
    let builder = StackedBuilder::new(variant, g)?;
    check_len("regressor", x, builder.n)?;
    let d = builder.state_dim();
    let mut out = StackedMatrices {
        a: DMatrix::zeros(d, d),
        b: DVector::zeros(d),
    };
    builder.fill(x.as_slice(), &mut out.a, &mut out.b);
    Ok(out)
}

/// Precomputed gain products for assembling `A(t)` and `B(t)` without
/// allocation in integration loops.
#[derive(Debug, Clone)]
pub(crate) struct StackedBuilder {
    variant: TunerVariant,
    n: usize,
    /// `M` or `M1`.
    lead: DMatrix<f64>,
    /// `M1 M2` (acceleration only).
    m1m2: DMatrix<f64>,
    /// `M3` (acceleration only).
    m3: DMatrix<f64>,
    scratch: std::cell::RefCell<(Vec<f64>, Vec<f64>)>,
}

impl StackedBuilder {
    pub(crate) fn new(variant: TunerVariant, g: &TunerGains) -> Result<Self> {
        if g.kind() != variant.gain_kind() {
            return Err(Error::GainKind {
                operation: "stacked_system",
                required: match variant.gain_kind() {
                    GainKind::Velocity => "velocity",
                    GainKind::Acceleration => "acceleration",
                },
            });
        }
        let n = g.dim();
        let (lead, m1m2, m3) = match g {
            TunerGains::Velocity { m } => (m.clone(), DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)),
            TunerGains::Acceleration { m1, m2, m3 } => (m1.clone(), m1 * m2, m3.clone()),
        };
        Ok(StackedBuilder {
            variant,
            n,
            lead,
            m1m2,
            m3,
            scratch: std::cell::RefCell::new((vec![0.0; n], vec![0.0; n])),
        })
    }

    pub(crate) fn state_dim(&self) -> usize {
        if self.variant.is_second_order() {
            2 * self.n
        } else {
            self.n
        }
    }

    /// Overwrites `a` and `b` with the system matrices at regressor value `x`.
    #[allow(clippy::needless_range_loop)]
    pub(crate) fn fill(&self, x: &[f64], a: &mut DMatrix<f64>, b: &mut DVector<f64>) {
        let n = self.n;
        let mut scratch = self.scratch.borrow_mut();
        let (u, v) = &mut *scratch;
        // u = M x (or M1 x)
        for i in 0..n {
            u[i] = (0..n).map(|j| self.lead[(i, j)] * x[j]).sum();
        }
        match self.variant {
            TunerVariant::Velocity | TunerVariant::NormalizedVelocity => {
                let scale = if self.variant == TunerVariant::NormalizedVelocity {
                    1.0 / (1.0 + x.iter().map(|v| v * v).sum::<f64>())
                } else {
                    1.0
                };
                for i in 0..n {
                    for j in 0..n {
                        a[(i, j)] = -scale * u[i] * x[j];
                    }
                    b[i] = scale * u[i];
                }
            }
            TunerVariant::Acceleration => {
                // v = M3 M1 x, so that M1 x xᵀ M1 M3 = u vᵀ.
                for i in 0..n {
                    v[i] = (0..n).map(|j| self.m3[(i, j)] * u[j]).sum();
                }
                a.fill(0.0);
                for i in 0..n {
                    a[(i, n + i)] = 1.0;
                    for j in 0..n {
                        a[(n + i, j)] = -u[i] * x[j];
                        a[(n + i, n + j)] = -2.0 * (self.m1m2[(i, j)] + u[i] * v[j]);
                    }
                    b[i] = 0.0;
                    b[n + i] = u[i];
                }
            }
        }
    }
}
