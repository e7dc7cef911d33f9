use std::fmt;

use nalgebra::DMatrix;

use crate::linalg::{self, SYMMETRY_TOL};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainKind {
    Velocity,
    Acceleration,
}

/// Constant gain matrices of a tuner.
///
/// Velocity tuners use a single matrix `M`; the accelerating tuner uses
/// `M1`, `M2` and `M3`. Construction only checks shapes, positivity and the
/// coupling conditions are reported by [`validate_gains`].
#[derive(Debug, Clone, PartialEq)]
pub enum TunerGains {
    Velocity {
        m: DMatrix<f64>,
    },
    Acceleration {
        m1: DMatrix<f64>,
        m2: DMatrix<f64>,
        m3: DMatrix<f64>,
    },
}

/// Scalars `m_i` when every gain matrix is `m_i I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarGains {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

impl ScalarGains {
    /// `4 m1² m2 m3`, which must exceed one.
    pub fn product(&self) -> f64 {
        4.0 * self.m1 * self.m1 * self.m2 * self.m3
    }
}

fn check_square(name: &'static str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension {
            context: name,
            expected: n,
            actual: if m.nrows() != n { m.nrows() } else { m.ncols() },
        });
    }
    Ok(())
}

impl TunerGains {
    pub fn velocity(m: DMatrix<f64>) -> Result<Self> {
        check_square("gain M", &m, m.nrows())?;
        Ok(TunerGains::Velocity { m })
    }

    pub fn acceleration(m1: DMatrix<f64>, m2: DMatrix<f64>, m3: DMatrix<f64>) -> Result<Self> {
        let n = m1.nrows();
        check_square("gain M1", &m1, n)?;
        check_square("gain M2", &m2, n)?;
        check_square("gain M3", &m3, n)?;
        Ok(TunerGains::Acceleration { m1, m2, m3 })
    }

    pub fn identity_velocity(n: usize) -> Self {
        TunerGains::Velocity {
            m: DMatrix::identity(n, n),
        }
    }

    pub fn scalar_acceleration(n: usize, m1: f64, m2: f64, m3: f64) -> Self {
        let eye = DMatrix::<f64>::identity(n, n);
        TunerGains::Acceleration {
            m1: &eye * m1,
            m2: &eye * m2,
            m3: &eye * m3,
        }
    }

    pub fn identity_acceleration(n: usize) -> Self {
        Self::scalar_acceleration(n, 1.0, 1.0, 1.0)
    }

    pub fn kind(&self) -> GainKind {
        match self {
            TunerGains::Velocity { .. } => GainKind::Velocity,
            TunerGains::Acceleration { .. } => GainKind::Acceleration,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TunerGains::Velocity { m } => m.nrows(),
            TunerGains::Acceleration { m1, .. } => m1.nrows(),
        }
    }

    /// `Some` iff this is an acceleration gain set with `M_i = m_i I`.
    pub fn scalar(&self) -> Option<ScalarGains> {
        match self {
            TunerGains::Velocity { .. } => None,
            TunerGains::Acceleration { m1, m2, m3 } => Some(ScalarGains {
                m1: linalg::as_scalar_multiple(m1, SYMMETRY_TOL)?,
                m2: linalg::as_scalar_multiple(m2, SYMMETRY_TOL)?,
                m3: linalg::as_scalar_multiple(m3, SYMMETRY_TOL)?,
            }),
        }
    }

    pub fn is_scalar(&self) -> bool {
        self.scalar().is_some()
    }

    pub fn is_identity(&self) -> bool {
        match self {
            TunerGains::Velocity { m } => linalg::as_scalar_multiple(m, SYMMETRY_TOL) == Some(1.0),
            TunerGains::Acceleration { .. } => matches!(
                self.scalar(),
                Some(ScalarGains { m1, m2, m3 }) if m1 == 1.0 && m2 == 1.0 && m3 == 1.0
            ),
        }
    }
}

/// The conditions checked by [`validate_gains`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainCondition {
    Symmetric(&'static str),
    PositiveDefinite(&'static str),
    /// `4 M1 M3 M1 − M2⁻¹ ≻ 0`
    InverseM2Dominated,
    /// `M2 M1 M3 + M3 M1 M2 − M1⁻¹/2 ≻ 0`
    CrossTermDominant,
    /// `4 m1² m2 m3 > 1` for scalar gains.
    ScalarProduct,
}

impl fmt::Display for GainCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainCondition::Symmetric(name) => write!(f, "{name} symmetric"),
            GainCondition::PositiveDefinite(name) => write!(f, "{name} positive definite"),
            GainCondition::InverseM2Dominated => f.write_str("M2^-1 < 4 M1 M3 M1"),
            GainCondition::CrossTermDominant => f.write_str("M2 M1 M3 + M3 M1 M2 > M1^-1/2"),
            GainCondition::ScalarProduct => f.write_str("4 m1^2 m2 m3 > 1"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub condition: GainCondition,
    /// Min eigenvalue (or asymmetry / product margin); `None` when the
    /// condition could not be evaluated because an earlier one failed.
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    /// Every evaluated condition with its margin (min eigenvalue for the
    /// matrix inequalities, `4m1²m2m3 − 1` for the scalar product).
    pub margins: Vec<(GainCondition, f64)>,
}

impl ValidationReport {
    pub fn margin(&self, condition: GainCondition) -> Option<f64> {
        self.margins.iter().find(|(c, _)| *c == condition).map(|&(_, m)| m)
    }

    pub fn is_violated(&self, condition: GainCondition) -> bool {
        self.violations.iter().any(|v| v.condition == condition)
    }
}

#[derive(Default)]
struct Checker {
    violations: Vec<Violation>,
    margins: Vec<(GainCondition, f64)>,
}

impl Checker {
    fn record(&mut self, condition: GainCondition, margin: f64, holds: bool) -> bool {
        self.margins.push((condition, margin));
        if !holds {
            self.violations.push(Violation {
                condition,
                margin: Some(margin),
            });
        }
        holds
    }

    fn skip(&mut self, condition: GainCondition) {
        self.violations.push(Violation {
            condition,
            margin: None,
        });
    }

    /// Symmetry and definiteness of one gain matrix.
    fn matrix(&mut self, name: &'static str, m: &DMatrix<f64>) -> bool {
        let asym = linalg::max_asymmetry(m);
        let sym = self.record(GainCondition::Symmetric(name), asym, asym <= SYMMETRY_TOL);
        let pd = linalg::is_positive_definite(m);
        self.record(GainCondition::PositiveDefinite(name), linalg::min_eigenvalue(m), pd);
        sym && pd
    }

    /// `lhs − rhs ≻ 0` with the threshold scaled by the larger side.
    fn dominance(&mut self, condition: GainCondition, lhs: &DMatrix<f64>, rhs: &DMatrix<f64>) {
        let diff = linalg::symmetrize(&(lhs - rhs));
        let lo = linalg::min_eigenvalue(&diff);
        let scale = linalg::sym_eigenvalues(lhs)
            .into_iter()
            .chain(linalg::sym_eigenvalues(rhs))
            .fold(0.0_f64, |a, v| a.max(v.abs()));
        self.record(condition, lo, lo > 0.0 && lo > linalg::PD_RELATIVE * scale);
    }
}

/// Checks symmetry, positive definiteness and the accelerating-tuner coupling
/// conditions. Violations are reported, not raised.
pub fn validate_gains(g: &TunerGains) -> ValidationReport {
    let mut ck = Checker::default();
    match g {
        TunerGains::Velocity { m } => {
            ck.matrix("M", m);
        }
        TunerGains::Acceleration { m1, m2, m3 } => {
            let ok1 = ck.matrix("M1", m1);
            let ok2 = ck.matrix("M2", m2);
            let ok3 = ck.matrix("M3", m3);
            let inverses = if ok1 && ok2 {
                m1.clone().try_inverse().zip(m2.clone().try_inverse())
            } else {
                None
            };
            match inverses {
                Some((m1_inv, m2_inv)) if ok3 => {
                    ck.dominance(GainCondition::InverseM2Dominated, &(m1 * m3 * m1 * 4.0), &m2_inv);
                    let cross = m2 * m1 * m3 + m3 * m1 * m2;
                    ck.dominance(GainCondition::CrossTermDominant, &cross, &(m1_inv * 0.5));
                }
                _ => {
                    ck.skip(GainCondition::InverseM2Dominated);
                    ck.skip(GainCondition::CrossTermDominant);
                }
            }
            if let Some(s) = g.scalar() {
                let margin = s.product() - 1.0;
                ck.record(GainCondition::ScalarProduct, margin, margin > 0.0);
            }
        }
    }
    ValidationReport {
        ok: ck.violations.is_empty(),
        violations: ck.violations,
        margins: ck.margins,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_acceleration_gains_are_valid() {
        let report = validate_gains(&TunerGains::identity_acceleration(2));
        assert!(report.ok, "{report:?}");
        // 4I − I and 2I − I/2
        assert!((report.margin(GainCondition::InverseM2Dominated).unwrap() - 3.0).abs() < 1e-12);
        assert!((report.margin(GainCondition::CrossTermDominant).unwrap() - 1.5).abs() < 1e-12);
        assert!((report.margin(GainCondition::ScalarProduct).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn small_m2_violates_inverse_condition() {
        let report = validate_gains(&TunerGains::scalar_acceleration(2, 1.0, 0.1, 1.0));
        assert!(!report.ok);
        assert!(report.is_violated(GainCondition::InverseM2Dominated));
        // 4I − 10I
        assert!((report.margin(GainCondition::InverseM2Dominated).unwrap() + 6.0).abs() < 1e-9);
        assert!(report.is_violated(GainCondition::ScalarProduct));
    }

    #[test]
    fn diagonal_velocity_gain_is_valid() {
        let g = TunerGains::velocity(DMatrix::from_diagonal(&nalgebra::dvector![1.0, 2.0])).unwrap();
        assert!(validate_gains(&g).ok);
        assert!(!g.is_scalar());
    }

    #[test]
    fn asymmetry_is_a_violation_not_an_error() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.0, 2.0]);
        let report = validate_gains(&TunerGains::velocity(m).unwrap());
        assert!(!report.ok);
        assert!(report.is_violated(GainCondition::Symmetric("M")));
    }

    #[test]
    fn mismatched_dimensions_are_errors() {
        let err = TunerGains::acceleration(
            DMatrix::identity(2, 2),
            DMatrix::identity(3, 3),
            DMatrix::identity(2, 2),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
        assert!(TunerGains::velocity(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn indefinite_gain_skips_coupling_conditions() {
        let g = TunerGains::scalar_acceleration(2, -1.0, 1.0, 1.0);
        let report = validate_gains(&g);
        assert!(report.is_violated(GainCondition::PositiveDefinite("M1")));
        assert!(report
            .violations
            .iter()
            .any(|v| v.condition == GainCondition::CrossTermDominant && v.margin.is_none()));
    }

    #[test]
    fn scalar_detection() {
        assert_eq!(
            TunerGains::scalar_acceleration(3, 2.0, 1.0, 0.5).scalar(),
            Some(ScalarGains {
                m1: 2.0,
                m2: 1.0,
                m3: 0.5
            })
        );
        assert!(TunerGains::identity_acceleration(2).is_identity());
        assert!(!TunerGains::scalar_acceleration(2, 2.0, 1.0, 1.0).is_identity());
    }
}
