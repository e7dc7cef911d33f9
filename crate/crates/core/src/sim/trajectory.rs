use nalgebra::{DMatrix, DVector};

use super::system::ErrorSystem;
use super::OVERFLOW_LIMIT;
use crate::analysis::LyapunovSpec;
use crate::model::rng::NormalStream;
use crate::model::{Scenario, TunerGains, TunerVariant};
use crate::tuners::{self, TunerState};
use crate::{Error, Result};

/// Monitor channels sampled on the time grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Channels {
    /// Lyapunov function.
    pub v: Vec<f64>,
    /// Prediction error `xᵀq` (noise-free part).
    pub err: Vec<f64>,
    /// `xᵀ(q + 2M1M3q̇)`; equals `err` for gradient tuners.
    pub moderr: Vec<f64>,
    pub norm_q: Vec<f64>,
    pub norm_dq: Vec<f64>,
    /// `∫ q̇ᵀDq̇` (`∫3q̇ᵀq̇` for identity gains); zero for gradient tuners.
    pub acc_dissipation: Vec<f64>,
    /// `∫ moderr²` (normalized gradient tuner: `∫ err²/(1+xᵀx)`).
    pub acc_l2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub variant: TunerVariant,
    pub p: DVector<f64>,
    pub times: Vec<f64>,
    pub states: Vec<TunerState>,
    pub channels: Channels,
    pub lyapunov: LyapunovSpec,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn q(&self, k: usize) -> DVector<f64> {
        &self.states[k].phat - &self.p
    }

    pub fn dq(&self, k: usize) -> Option<&DVector<f64>> {
        self.states[k].dphat.as_ref()
    }

    pub fn final_q(&self) -> DVector<f64> {
        self.q(self.len() - 1)
    }

    /// `V(0) − V(t_k) − ∫dissipation − ∫error energy`; zero in exact arithmetic.
    pub fn energy_residual(&self, k: usize) -> f64 {
        let c = &self.channels;
        c.v[0] - c.v[k] - c.acc_dissipation[k] - c.acc_l2[k]
    }

    /// `√(V(0)/λ_min(P_V))`.
    pub fn norm_bound(&self) -> f64 {
        self.lyapunov.norm_bound(self.channels.v[0])
    }
}

/// Accumulates channels along a run in error coordinates.
struct Recorder<'a> {
    s: &'a Scenario,
    spec: LyapunovSpec,
    traj: Trajectory,
    prev_rates: (f64, f64),
}

impl<'a> Recorder<'a> {
    fn new(s: &'a Scenario) -> Result<Self> {
        let spec = LyapunovSpec::new(&s.gains)?;
        let cap = s.num_steps() + 1;
        let mut channels = Channels::default();
        for ch in [
            &mut channels.v,
            &mut channels.err,
            &mut channels.moderr,
            &mut channels.norm_q,
            &mut channels.norm_dq,
            &mut channels.acc_dissipation,
            &mut channels.acc_l2,
        ] {
            ch.reserve(cap);
        }
        Ok(Recorder {
            s,
            traj: Trajectory {
                variant: s.variant,
                p: s.p.clone(),
                times: Vec::with_capacity(cap),
                states: Vec::with_capacity(cap),
                channels,
                lyapunov: spec.clone(),
            },
            spec,
            prev_rates: (0.0, 0.0),
        })
    }

    fn rates(&self, z: &DVector<f64>, x: &DVector<f64>) -> (f64, f64) {
        (
            self.spec.dissipation_rate(z),
            self.spec.error_energy_rate(self.s.variant, z, x),
        )
    }

    /// Records grid point `k` with error state `z`.
    fn push(&mut self, k: usize, z: &DVector<f64>) {
        let s = self.s;
        let n = s.dim();
        let t = s.time(k);
        let x = s.regressor.sample(t);
        let q = z.rows(0, n).into_owned();
        let c = &mut self.traj.channels;

        if k == 0 {
            c.acc_dissipation.push(0.0);
            c.acc_l2.push(0.0);
        } else {
            // Trapezoid over [t_{k-1}, t_k] with the regressor's left limit at t_k.
            let (d1, e1) = self.rates_left(z, t);
            let c = &mut self.traj.channels;
            let (d0, e0) = self.prev_rates;
            let h = s.step;
            let last_d = *c.acc_dissipation.last().unwrap();
            let last_e = *c.acc_l2.last().unwrap();
            c.acc_dissipation.push(last_d + 0.5 * h * (d0 + d1));
            c.acc_l2.push(last_e + 0.5 * h * (e0 + e1));
        }
        self.prev_rates = self.rates(z, &x);

        let c = &mut self.traj.channels;
        c.v.push(self.spec.value(z));
        c.err.push(x.dot(&q));
        c.moderr.push(self.spec.modified_error(z, &x));
        c.norm_q.push(q.norm());
        let dphat = if s.variant.is_second_order() {
            let dq = z.rows(n, n).into_owned();
            c.norm_dq.push(dq.norm());
            Some(dq)
        } else {
            c.norm_dq.push(0.0);
            None
        };
        self.traj.times.push(t);
        self.traj.states.push(TunerState { phat: &q + &s.p, dphat });
    }

    fn rates_left(&self, z: &DVector<f64>, t: f64) -> (f64, f64) {
        let x = self.s.regressor.sample_left(t);
        self.rates(z, &x)
    }
}

fn guard(t: f64, z: &DVector<f64>) -> Result<()> {
    let norm = z.norm();
    if !norm.is_finite() {
        return Err(Error::NonFinite { t });
    }
    if norm > OVERFLOW_LIMIT {
        return Err(Error::Overflow { t, norm });
    }
    Ok(())
}

/// Tuner right-hand side on the stacked estimate `[p̂; dp̂]`, driven by the
/// noise-free measurement `y = xᵀp`.
fn tuner_rhs(s: &Scenario, x: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
    let n = s.dim();
    let y = x.dot(&s.p);
    let phat = w.rows(0, n).into_owned();
    match (&s.variant, &s.gains) {
        (TunerVariant::Velocity, TunerGains::Velocity { m }) => tuners::velocity_field(&phat, x, y, m),
        (TunerVariant::NormalizedVelocity, TunerGains::Velocity { m }) => {
            tuners::normalized_velocity_field(&phat, x, y, m)
        }
        (TunerVariant::Acceleration, g) => {
            let dphat = w.rows(n, n).into_owned();
            let acc = tuners::acceleration_field(&TunerState::second_order(phat, dphat.clone()), x, y, g)?;
            let mut out = DVector::zeros(2 * n);
            out.rows_mut(0, n).copy_from(&dphat);
            out.rows_mut(n, n).copy_from(&acc);
            Ok(out)
        }
        _ => Err(Error::GainKind {
            operation: "integrate",
            required: if s.variant.is_second_order() {
                "acceleration"
            } else {
                "velocity"
            },
        }),
    }
}

/// Noise-free run with classical fixed-step RK4.
///
/// The tuner state `[p̂; dp̂]` is integrated in implementable form. Over each
/// step the regressor is sampled at `t`, `t+h/2` and `t+h⁻`, so pseudorandom
/// switching instants on the grid are resolved exactly.
pub fn integrate_deterministic(s: &Scenario) -> Result<Trajectory> {
    s.validate()?;
    if !s.noise.is_noise_free() {
        return Err(Error::Precondition {
            operation: "integrate_deterministic",
            reason: "scenario has measurement noise; use integrate_stochastic".into(),
        });
    }
    let n = s.dim();
    let h = s.step;
    let mut w = if s.variant.is_second_order() {
        let mut w = DVector::zeros(2 * n);
        w.rows_mut(0, n).copy_from(&s.phat0);
        w.rows_mut(n, n).copy_from(&s.dphat0);
        w
    } else {
        s.phat0.clone()
    };
    let to_error = |w: &DVector<f64>| {
        let mut z = w.clone();
        z.rows_mut(0, n).copy_from(&(w.rows(0, n) - &s.p));
        z
    };

    let mut rec = Recorder::new(s)?;
    rec.push(0, &to_error(&w));
    for k in 0..s.num_steps() {
        let t = s.time(k);
        let x0 = s.regressor.sample(t);
        let xm = s.regressor.sample(t + 0.5 * h);
        let x1 = s.regressor.sample_left(t + h);
        let k1 = tuner_rhs(s, &x0, &w)?;
        let k2 = tuner_rhs(s, &xm, &(&w + &k1 * (0.5 * h)))?;
        let k3 = tuner_rhs(s, &xm, &(&w + &k2 * (0.5 * h)))?;
        let k4 = tuner_rhs(s, &x1, &(&w + &k3 * h))?;
        w += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        guard(s.time(k + 1), &w)?;
        rec.push(k + 1, &to_error(&w));
    }
    Ok(rec.traj)
}

/// Euler–Maruyama path of the error state, visiting every grid point.
///
/// `z_{k+1} = z_k + h A(t_k) z_k + B(t_k) σ_w √h ξ_k`, one standard normal per
/// step from a [`NormalStream`] seeded with `seed`. No normals are drawn when
/// `σ_w = 0`.
pub(crate) fn euler_maruyama<F>(s: &Scenario, seed: u64, mut visit: F) -> Result<()>
where
    F: FnMut(usize, &DVector<f64>) -> Result<()>,
{
    let mut sys = ErrorSystem::new(s)?;
    let d = sys.dim();
    let mut a = DMatrix::zeros(d, d);
    let mut b = DVector::zeros(d);
    let mut az = DVector::zeros(d);
    let mut z = s.z0();
    let h = s.step;
    let diffusion = s.noise.sigma_w * h.sqrt();
    let mut normals = NormalStream::new(seed);

    visit(0, &z)?;
    for k in 0..s.num_steps() {
        let t = s.time(k);
        sys.at(t, &mut a, &mut b);
        az.gemv(1.0, &a, &z, 0.0);
        z.axpy(h, &az, 1.0);
        if diffusion != 0.0 {
            let xi = normals.next_normal();
            z.axpy(diffusion * xi, &b, 1.0);
        }
        guard(s.time(k + 1), &z)?;
        visit(k + 1, &z)?;
    }
    Ok(())
}

/// Noisy run by Euler–Maruyama with the scenario's noise seed.
pub fn integrate_stochastic(s: &Scenario) -> Result<Trajectory> {
    s.validate()?;
    let mut rec = Recorder::new(s)?;
    euler_maruyama(s, s.noise.seed, |k, z| {
        rec.push(k, z);
        Ok(())
    })?;
    Ok(rec.traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NoiseModel, RegressorSignal};
    use nalgebra::dvector;

    fn scalar_velocity(h: f64) -> Scenario {
        Scenario::from_error(
            TunerVariant::Velocity,
            TunerGains::identity_velocity(1),
            RegressorSignal::step(vec![1.0]),
            dvector![0.0],
            dvector![1.0],
            1.0,
            h,
        )
    }

    #[test]
    fn equilibrium_stays_put() {
        for variant in [
            TunerVariant::Velocity,
            TunerVariant::NormalizedVelocity,
            TunerVariant::Acceleration,
        ] {
            for (_, r) in RegressorSignal::presets() {
                let mut s = Scenario::figure(variant, r).with_horizon(2.0);
                s.phat0 = s.p.clone();
                let traj = integrate_deterministic(&s).unwrap();
                assert!(traj.channels.norm_q.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn grid_is_uniform_and_channels_aligned() {
        let traj = integrate_deterministic(&scalar_velocity(1e-2)).unwrap();
        assert_eq!(traj.len(), 101);
        assert_eq!(traj.channels.v.len(), 101);
        assert_eq!(traj.channels.acc_l2.len(), 101);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert!(traj.channels.acc_l2.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn noisy_scenario_rejected_by_deterministic_integrator() {
        let s = scalar_velocity(1e-2).with_noise(NoiseModel::white(1.0, 3));
        assert!(matches!(integrate_deterministic(&s), Err(Error::Precondition { .. })));
    }

    #[test]
    fn overflow_guard_trips() {
        // Negative gain turns the tuner unstable.
        let mut s = scalar_velocity(1e-2).with_horizon(100.0);
        s.gains = TunerGains::velocity(DMatrix::from_element(1, 1, -1.0)).unwrap();
        match integrate_deterministic(&s) {
            Err(e @ Error::Overflow { .. }) => assert!(e.is_numerical_abort()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn same_seed_same_path() {
        let s = scalar_velocity(1e-3).with_noise(NoiseModel::white(1.0, 99));
        let a = integrate_stochastic(&s).unwrap();
        let b = integrate_stochastic(&s).unwrap();
        assert_eq!(a.states, b.states);
        let c = integrate_stochastic(&s.clone().with_noise(NoiseModel::white(1.0, 100))).unwrap();
        assert_ne!(a.states, c.states);
    }
}
