use nalgebra::{DMatrix, DVector};

use super::bounds::bound_exact;
use super::transition::transition_blocks;
use crate::model::{Scenario, TunerGains, TunerVariant};
use crate::sim::system::{rk4_linear, rk4_lyapunov, ErrorSystem};
use crate::sim::OVERFLOW_LIMIT;
use crate::{Error, Result};

/// Analytic second moment of `q(t)` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticCovariance {
    pub times: Vec<f64>,
    /// q-block of the stacked second moment `P(t)`.
    pub second_moment: Vec<DMatrix<f64>>,
    /// `E{q(t)}`, the q part of `φ(t,0) z(0)`.
    pub mean: Vec<DVector<f64>>,
    /// `E{q} E{q}ᵀ`; equals `φ11 qq(0) φ11ᵀ` when `q̇(0) = 0`.
    pub mean_term: Vec<DMatrix<f64>>,
    /// `second_moment − mean_term`, the noise-driven part.
    pub noise: Vec<DMatrix<f64>>,
    /// Full transition matrix `φ(t, 0)`.
    pub transition: Vec<DMatrix<f64>>,
    /// Exact upper bound on `noise` (scalar acceleration gains, `q̇(0) = 0`).
    pub bound: Option<Vec<DMatrix<f64>>>,
}

/// [`covariance_ode_strided`] recording every grid point.
pub fn covariance_ode(s: &Scenario) -> Result<AnalyticCovariance> {
    covariance_ode_strided(s, 1)
}

/// Integrates `Ṗ = A P + P Aᵀ + σ_w² B Bᵀ` from `P(0) = z(0) z(0)ᵀ` alongside
/// `φ̇ = A φ` with RK4 on the scenario grid, recording every `stride`-th point.
pub fn covariance_ode_strided(s: &Scenario, stride: usize) -> Result<AnalyticCovariance> {
    s.validate()?;
    if stride == 0 {
        return Err(Error::Precondition {
            operation: "covariance_ode",
            reason: "stride must be positive".into(),
        });
    }
    let n = s.dim();
    let mut sys = ErrorSystem::new(s)?;
    let d = sys.dim();
    let z0 = s.z0();
    let mut p = &z0 * z0.transpose();
    let mut phi = DMatrix::identity(d, d);
    let noise_var = s.noise.sigma_w * s.noise.sigma_w;
    let h = s.step;
    let mut mats = sys.zeros();

    let bound_gains = match (&s.gains, s.variant) {
        (g @ TunerGains::Acceleration { .. }, TunerVariant::Acceleration)
            if s.dphat0.iter().all(|&v| v == 0.0) && g.scalar().is_some_and(|sg| sg.product() > 1.0) =>
        {
            Some(g)
        }
        _ => None,
    };

    let points = s.num_steps() / stride + 1;
    let mut out = AnalyticCovariance {
        times: Vec::with_capacity(points),
        second_moment: Vec::with_capacity(points),
        mean: Vec::with_capacity(points),
        mean_term: Vec::with_capacity(points),
        noise: Vec::with_capacity(points),
        transition: Vec::with_capacity(points),
        bound: bound_gains.map(|_| Vec::with_capacity(points)),
    };
    let mut record = |k: usize, p: &DMatrix<f64>, phi: &DMatrix<f64>| -> Result<()> {
        let pq = p.view((0, 0), (n, n)).into_owned();
        let mean = (phi * &z0).rows(0, n).into_owned();
        let mean_term = &mean * mean.transpose();
        if let (Some(g), Some(bounds)) = (bound_gains, out.bound.as_mut()) {
            let phi11 = phi.view((0, 0), (n, n)).into_owned();
            let phi12 = phi.view((0, n), (n, n)).into_owned();
            bounds.push(bound_exact(g, &phi11, &phi12, s.noise.sigma_w)?);
        }
        out.times.push(s.time(k));
        out.noise.push(&pq - &mean_term);
        out.second_moment.push(pq);
        out.mean.push(mean);
        out.mean_term.push(mean_term);
        out.transition.push(phi.clone());
        Ok(())
    };

    record(0, &p, &phi)?;
    for k in 0..s.num_steps() {
        sys.load_step(s.time(k), h, &mut mats);
        p = rk4_lyapunov(&mats, h, noise_var, &p);
        phi = rk4_linear(&mats, h, &phi);
        let t = s.time(k + 1);
        let norm = crate::linalg::max_abs(&p).max(crate::linalg::max_abs(&phi));
        if !norm.is_finite() {
            return Err(Error::NonFinite { t });
        }
        if norm > OVERFLOW_LIMIT {
            return Err(Error::Overflow { t, norm });
        }
        if (k + 1) % stride == 0 {
            record(k + 1, &p, &phi)?;
        }
    }
    Ok(out)
}

/// `φ qq₀ φᵀ + σ_w²/2 (M − φ M φᵀ)`.
pub fn velocity_covariance_closed_form(
    phi: &DMatrix<f64>,
    m: &DMatrix<f64>,
    qq0: &DMatrix<f64>,
    sigma_w: f64,
) -> DMatrix<f64> {
    let phit = phi.transpose();
    phi * qq0 * &phit + (m - phi * m * &phit) * (0.5 * sigma_w * sigma_w)
}

/// Closed-form second moment of the gradient tuner at time `t`, with
/// `φ(t, 0)` from [`transition_blocks`].
pub fn velocity_covariance_exact(s: &Scenario, t: f64, qq0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let TunerGains::Velocity { m } = &s.gains else {
        return Err(Error::GainKind {
            operation: "velocity_covariance_exact",
            required: "velocity",
        });
    };
    if s.variant != TunerVariant::Velocity {
        return Err(Error::Precondition {
            operation: "velocity_covariance_exact",
            reason: "closed form holds for the unnormalized gradient tuner only".into(),
        });
    }
    let n = s.dim();
    if qq0.shape() != (n, n) {
        return Err(Error::Dimension {
            context: "initial second moment",
            expected: n,
            actual: qq0.nrows(),
        });
    }
    let phi = transition_blocks(s, t, 0.0)?.phi;
    Ok(velocity_covariance_closed_form(&phi, m, qq0, s.noise.sigma_w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::model::{NoiseModel, RegressorSignal};
    use nalgebra::dvector;

    fn scalar_velocity() -> Scenario {
        Scenario::from_error(
            TunerVariant::Velocity,
            TunerGains::identity_velocity(1),
            RegressorSignal::step(vec![1.0]),
            dvector![0.0],
            dvector![2.0],
            5.0,
            1e-3,
        )
        .with_noise(NoiseModel::white(1.0, 0))
    }

    #[test]
    fn zero_noise_and_zero_start_stay_zero() {
        let mut s = Scenario::figure(TunerVariant::Acceleration, RegressorSignal::preset_sinusoid()).with_horizon(2.0);
        s.phat0 = s.p.clone();
        let cov = covariance_ode(&s).unwrap();
        assert!(cov.second_moment.iter().all(|m| m.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn scalar_velocity_matches_closed_form() {
        let s = scalar_velocity();
        let cov = covariance_ode_strided(&s, 100).unwrap();
        for (t, m) in cov.times.iter().zip(&cov.second_moment) {
            let e = (-2.0 * t).exp();
            let expected = 4.0 * e + 0.5 * (1.0 - e);
            assert!((m[(0, 0)] - expected).abs() < 1e-9, "t {t}");
        }
        let exact = velocity_covariance_exact(&s, 0.0, &DMatrix::from_element(1, 1, 4.0)).unwrap();
        assert_eq!(exact[(0, 0)], 4.0);
        let exact = velocity_covariance_exact(&s, 1.0, &DMatrix::from_element(1, 1, 4.0)).unwrap();
        let e = (-2.0f64).exp();
        assert!((exact[(0, 0)] - (4.0 * e + 0.5 * (1.0 - e))).abs() < 1e-9);
    }

    #[test]
    fn noise_part_is_psd_and_bounded() {
        let s = Scenario::figure(TunerVariant::Acceleration, RegressorSignal::preset_sinusoid())
            .with_horizon(10.0)
            .with_noise(NoiseModel::white(1.0, 0));
        let cov = covariance_ode_strided(&s, 10).unwrap();
        let bound = cov.bound.as_ref().unwrap();
        for (noise, b) in cov.noise.iter().zip(bound) {
            assert!(linalg::min_eigenvalue(noise) >= -1e-10);
            assert!(linalg::min_eigenvalue(&(b - noise)) >= -1e-8);
        }
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        let s = Scenario::figure(TunerVariant::Acceleration, RegressorSignal::preset_step());
        assert!(velocity_covariance_exact(&s, 1.0, &DMatrix::identity(2, 2)).is_err());
    }
}
