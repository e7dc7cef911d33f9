//! Composite matrices of the covariance integration identity and the
//! steady-state covariance bounds built on it.

use nalgebra::DMatrix;

use crate::model::{ScalarGains, TunerGains};
use crate::{Error, Result};

type GainRefs<'a> = (&'a DMatrix<f64>, &'a DMatrix<f64>, &'a DMatrix<f64>);

fn accel<'a>(g: &'a TunerGains, operation: &'static str) -> Result<GainRefs<'a>> {
    match g {
        TunerGains::Acceleration { m1, m2, m3 } => Ok((m1, m2, m3)),
        TunerGains::Velocity { .. } => Err(Error::GainKind {
            operation,
            required: "acceleration",
        }),
    }
}

fn blocks(tl: &DMatrix<f64>, tr: &DMatrix<f64>, bl: &DMatrix<f64>, br: &DMatrix<f64>) -> DMatrix<f64> {
    let n = tl.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(tl);
    out.view_mut((0, n), (n, n)).copy_from(tr);
    out.view_mut((n, 0), (n, n)).copy_from(bl);
    out.view_mut((n, n), (n, n)).copy_from(br);
    out
}

/// `M̄1 = [[M1M3M1 + μ1M1, −M1/2], [−M1/2, (1+μ2)M1M2M1]]`.
pub fn composite_m1(g: &TunerGains, mu1: f64, mu2: f64) -> Result<DMatrix<f64>> {
    let (m1, m2, m3) = accel(g, "composite_m1")?;
    let half = m1 * -0.5;
    Ok(blocks(
        &(m1 * m3 * m1 + m1 * mu1),
        &half,
        &half,
        &(m1 * m2 * m1 * (1.0 + mu2)),
    ))
}

/// `M̄2 = [[M1, K], [K, 4(1+μ2)M1M2M1M2M1]]` with
/// `K = μ1 M1xxᵀM1 − (2+μ2) M1M2M1`; `xx` is `xxᵀ` or its average `R`.
pub fn composite_m2(g: &TunerGains, mu1: f64, mu2: f64, xx: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m1, m2, _) = accel(g, "composite_m2")?;
    let m1m2m1 = m1 * m2 * m1;
    let off = m1 * xx * m1 * mu1 - &m1m2m1 * (2.0 + mu2);
    Ok(blocks(m1, &off, &off, &(&m1m2m1 * m2 * m1 * (4.0 * (1.0 + mu2)))))
}

/// Lower-right correction of the identity:
/// `−M1xxᵀM1 + 2(1+μ2)(M1M2M1M3M1xxᵀM1 + M1xxᵀM1M3M1M2M1)`.
pub fn correction_block(g: &TunerGains, mu2: f64, xx: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m1, m2, m3) = accel(g, "correction_block")?;
    let mxm = m1 * xx * m1;
    let lhs = m1 * m2 * m1 * m3 * &mxm;
    let rhs = &mxm * m3 * m1 * m2 * m1;
    Ok(-&mxm + (lhs + rhs) * (2.0 * (1.0 + mu2)))
}

/// The free scalars of the identity together with the composite matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundParams {
    pub mu1: f64,
    pub mu2: f64,
    pub m_bar1: DMatrix<f64>,
    pub m_bar2: DMatrix<f64>,
}

impl BoundParams {
    pub fn new(g: &TunerGains, mu1: f64, mu2: f64, xx: &DMatrix<f64>) -> Result<Self> {
        Ok(BoundParams {
            mu1,
            mu2,
            m_bar1: composite_m1(g, mu1, mu2)?,
            m_bar2: composite_m2(g, mu1, mu2, xx)?,
        })
    }

    /// `μ1 = μ2 = 0`, where `M̄2` is positive semidefinite.
    pub fn exact(g: &TunerGains) -> Result<Self> {
        let n = g.dim();
        Self::new(g, 0.0, 0.0, &DMatrix::zeros(n, n))
    }

    /// Averaged regressor `R = rI` with the least `μ1` keeping `M̄2 ⪰ 0`.
    pub fn approximate(g: &TunerGains, r: f64, mu2: f64) -> Result<Self> {
        let s = g.scalar().ok_or(Error::NotScalar {
            operation: "BoundParams::approximate",
        })?;
        let n = g.dim();
        let mu1 = approx_mu1(s.m2, r, mu2);
        Self::new(g, mu1, mu2, &(DMatrix::identity(n, n) * r))
    }
}

fn scalar_gains(g: &TunerGains, operation: &'static str) -> Result<ScalarGains> {
    accel(g, operation)?;
    let s = g.scalar().ok_or(Error::NotScalar { operation })?;
    if s.product() <= 1.0 {
        return Err(Error::Precondition {
            operation,
            reason: format!("4 m1^2 m2 m3 = {} must exceed 1", s.product()),
        });
    }
    Ok(s)
}

/// Steady-state coefficient of the exact bound, `m1²m3 / (4m1²m2m3 − 1)`.
pub fn exact_coefficient(s: ScalarGains) -> f64 {
    s.m1 * s.m1 * s.m3 / (s.product() - 1.0)
}

/// Upper bound (PSD order) on the noise part of `E{qqᵀ(t)}`:
/// `σ_w²/(4m1²m2m3 − 1) · (m1²m3 I − [φ11 φ12] M̄1 [φ11 φ12]ᵀ)` with
/// `μ1 = μ2 = 0` and the blocks evaluated at `(t, 0)`.
pub fn bound_exact(g: &TunerGains, phi11: &DMatrix<f64>, phi12: &DMatrix<f64>, sigma_w: f64) -> Result<DMatrix<f64>> {
    let s = scalar_gains(g, "bound_exact")?;
    let n = g.dim();
    if phi11.shape() != (n, n) || phi12.shape() != (n, n) {
        return Err(Error::Dimension {
            context: "transition blocks",
            expected: n,
            actual: phi11.nrows(),
        });
    }
    let m_bar1 = composite_m1(g, 0.0, 0.0)?;
    let mut row = DMatrix::zeros(n, 2 * n);
    row.view_mut((0, 0), (n, n)).copy_from(phi11);
    row.view_mut((0, n), (n, n)).copy_from(phi12);
    let inner = DMatrix::identity(n, n) * (s.m1 * s.m1 * s.m3) - &row * m_bar1 * row.transpose();
    Ok(crate::linalg::symmetrize(&inner) * (sigma_w * sigma_w / (s.product() - 1.0)))
}

/// `μ1 = (m2/r)(2 + μ2 − 2√(1+μ2))`.
pub fn approx_mu1(m2: f64, r: f64, mu2: f64) -> f64 {
    m2 / r * (2.0 + mu2 - 2.0 * (1.0 + mu2).sqrt())
}

/// Steady-state coefficient (of `I`) of the averaged bound:
/// `(m1²m3r + m1m2(μ2 + 2 − 2√(1+μ2))) / (4m1²m2m3r(1+μ2) − r)`.
pub fn bound_approx(m1: f64, m2: f64, m3: f64, r: f64, mu2: f64) -> Result<f64> {
    let fail = |reason: String| {
        Err(Error::Precondition {
            operation: "bound_approx",
            reason,
        })
    };
    if !(r > 0.0) {
        return fail(format!("r must be positive, got {r}"));
    }
    if !(mu2 >= 0.0) {
        return fail(format!("mu2 must be nonnegative, got {mu2}"));
    }
    if !(m1 > 0.0 && m2 > 0.0 && m3 > 0.0) {
        return fail("gains must be positive".into());
    }
    let denom = 4.0 * m1 * m1 * m2 * m3 * r * (1.0 + mu2) - r;
    if denom <= 0.0 {
        return fail(format!("denominator {denom} is not positive"));
    }
    Ok((m1 * m1 * m3 * r + m1 * m2 * (mu2 + 2.0 - 2.0 * (1.0 + mu2).sqrt())) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    #[test]
    fn exact_bound_vanishes_at_start() {
        let g = TunerGains::identity_acceleration(2);
        let b = bound_exact(&g, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2), 1.0).unwrap();
        assert_eq!(b, DMatrix::zeros(2, 2));
    }

    #[test]
    fn exact_bound_steady_state() {
        let zero = DMatrix::zeros(2, 2);
        let b = bound_exact(&TunerGains::identity_acceleration(2), &zero, &zero, 2.0).unwrap();
        assert!((b - DMatrix::identity(2, 2) * (4.0 / 3.0)).amax() < 1e-15);
        let b = bound_exact(&TunerGains::scalar_acceleration(2, 2.0, 1.0, 1.0), &zero, &zero, 1.0).unwrap();
        assert!((b - DMatrix::identity(2, 2) * (4.0 / 15.0)).amax() < 1e-15);
    }

    #[test]
    fn exact_bound_preconditions() {
        let eye = DMatrix::identity(2, 2);
        let g = TunerGains::acceleration(
            DMatrix::from_diagonal(&nalgebra::dvector![1.0, 2.0]),
            eye.clone(),
            eye.clone(),
        )
        .unwrap();
        assert!(matches!(bound_exact(&g, &eye, &eye, 1.0), Err(Error::NotScalar { .. })));
        let weak = TunerGains::scalar_acceleration(2, 0.5, 1.0, 1.0);
        assert!(matches!(
            bound_exact(&weak, &eye, &eye, 1.0),
            Err(Error::Precondition { .. })
        ));
    }

    #[test]
    fn approx_examples() {
        assert!((bound_approx(1.0, 1.0, 1.0, 1.0, 3.0).unwrap() - 2.0 / 15.0).abs() < 1e-15);
        for (m1, m2, m3) in [(1.0, 1.0, 1.0), (2.0, 1.0, 1.0), (1.0, 2.0, 0.5)] {
            let exact = exact_coefficient(ScalarGains { m1, m2, m3 });
            assert!((bound_approx(m1, m2, m3, 1.0, 0.0).unwrap() - exact).abs() < 1e-12);
        }
        assert!(bound_approx(1.0, 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(bound_approx(0.5, 1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn approx_shape_in_mu2() {
        // Decreases from 1/3 to a minimum between μ2 = 3 and 5, then climbs
        // back towards the 1/(4 m1 m3 r) = 1/4 limit.
        let f: Vec<f64> = (0..=10)
            .map(|k| bound_approx(1.0, 1.0, 1.0, 1.0, k as f64).unwrap())
            .collect();
        assert!(f[..5].windows(2).all(|w| w[1] < w[0]), "{f:?}");
        assert!(f[4..].windows(2).all(|w| w[1] > w[0]), "{f:?}");
        assert!(f.iter().all(|&v| v <= 1.0 / 3.0 + 1e-15 && v > 0.13));
        let far = bound_approx(1.0, 1.0, 1.0, 1.0, 1e12).unwrap();
        assert!((far - 0.25).abs() < 1e-5);
    }

    #[test]
    fn exact_m_bar2_is_psd_and_approximate_choice_is_minimal() {
        for g in [
            TunerGains::identity_acceleration(2),
            TunerGains::scalar_acceleration(2, 2.0, 1.0, 1.0),
            TunerGains::scalar_acceleration(2, 1.0, 2.0, 0.5),
        ] {
            let exact = BoundParams::exact(&g).unwrap();
            assert!(linalg::min_eigenvalue(&exact.m_bar2) > -1e-12);
            for mu2 in [0.5, 1.0, 4.0] {
                let p = BoundParams::approximate(&g, 0.7, mu2).unwrap();
                assert!(linalg::min_eigenvalue(&p.m_bar2) > -1e-10);
                let n = g.dim();
                let smaller = composite_m2(&g, p.mu1 * 0.9, mu2, &(DMatrix::identity(n, n) * 0.7)).unwrap();
                assert!(linalg::min_eigenvalue(&smaller) < 0.0);
            }
        }
    }
}
