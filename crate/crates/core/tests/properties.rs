use nalgebra::{dvector, DMatrix, DVector};
use proptest::prelude::*;
use tuner_lab::analysis::{lyapunov, lyapunov_rate_for};
use tuner_lab::model::{
    validate_gains, GainCondition, NoiseModel, RegressorSignal, Scenario, TunerGains, TunerVariant,
};
use tuner_lab::sim::{integrate_deterministic, integrate_stochastic, monte_carlo, monte_carlo_with, Execution};
use tuner_lab::tuners::stacked_system;

fn scalar(variant: TunerVariant, gains: TunerGains, h: f64) -> Scenario {
    Scenario::from_error(
        variant,
        gains,
        RegressorSignal::step(vec![1.0]),
        dvector![0.5],
        dvector![1.0],
        1.0,
        h,
    )
}

fn accel_exact(t: f64) -> f64 {
    let (l1, l2) = (-2.0 + 3f64.sqrt(), -2.0 - 3f64.sqrt());
    (-l2 * (l1 * t).exp() + l1 * (l2 * t).exp()) / (l1 - l2)
}

#[test]
fn rk4_error_drops_sixteenfold_when_step_halves() {
    type Probe = (TunerVariant, TunerGains, fn(f64) -> f64);
    let probes: [Probe; 2] = [
        (TunerVariant::Velocity, TunerGains::identity_velocity(1), |t| (-t).exp()),
        (
            TunerVariant::Acceleration,
            TunerGains::identity_acceleration(1),
            accel_exact,
        ),
    ];
    for (variant, gains, exact) in probes {
        let err = |h: f64| {
            let traj = integrate_deterministic(&scalar(variant, gains.clone(), h)).unwrap();
            (traj.final_q()[0] - exact(1.0)).abs()
        };
        let ratio = err(0.05) / err(0.025);
        assert!((8.0..=32.0).contains(&ratio), "{variant:?}: ratio {ratio}");
    }
}

#[test]
fn lyapunov_nonincreasing_for_every_variant_and_preset() {
    for (name, regressor) in RegressorSignal::presets() {
        for variant in [
            TunerVariant::Velocity,
            TunerVariant::NormalizedVelocity,
            TunerVariant::Acceleration,
        ] {
            let traj = integrate_deterministic(&Scenario::figure(variant, regressor.clone())).unwrap();
            let v = &traj.channels.v;
            let slack = 1e-9 * (1.0 + v[0]);
            assert!(v.windows(2).all(|w| w[1] <= w[0] + slack), "{name} {variant:?}");
            let bound = traj.norm_bound();
            assert!(traj.channels.norm_q.iter().all(|&q| q <= bound * (1.0 + 1e-12)));
            assert!(traj.channels.norm_dq.iter().all(|&q| q <= bound * (1.0 + 1e-12)));
        }
    }
}

#[test]
fn energy_balance_holds_for_general_gains() {
    let mut s = Scenario::figure(TunerVariant::Acceleration, RegressorSignal::preset_sinusoid());
    s.gains = TunerGains::scalar_acceleration(2, 2.0, 1.0, 0.5);
    let traj = integrate_deterministic(&s).unwrap();
    let v0 = traj.channels.v[0];
    for k in 0..traj.len() {
        assert!(traj.energy_residual(k).abs() <= 1e-5 * v0, "k = {k}");
    }
}

#[test]
fn equilibrium_stays_put() {
    for (_, regressor) in RegressorSignal::presets() {
        let mut s = Scenario::figure(TunerVariant::Acceleration, regressor);
        s.phat0 = s.p.clone();
        let traj = integrate_deterministic(&s.with_horizon(5.0)).unwrap();
        assert!(traj.channels.norm_q.iter().all(|&q| q == 0.0));
    }
}

#[test]
fn lyapunov_rate_matches_finite_difference() {
    let mut s = Scenario::figure(TunerVariant::Acceleration, RegressorSignal::preset_sinusoid()).with_step(1e-4);
    s.gains = TunerGains::acceleration(
        DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 1.0]),
        DMatrix::from_row_slice(2, 2, &[0.8, 0.1, 0.1, 0.6]),
    )
    .unwrap();
    assert!(validate_gains(&s.gains).ok);
    let traj = integrate_deterministic(&s.with_horizon(3.0)).unwrap();
    let z = |k: usize| {
        let mut z = DVector::zeros(4);
        z.rows_mut(0, 2).copy_from(&traj.q(k));
        z.rows_mut(2, 2).copy_from(traj.dq(k).unwrap());
        z
    };
    for k in [1000, 10000, 25000] {
        let h = traj.times[k + 1] - traj.times[k];
        let fd = (lyapunov(&z(k + 1), &traj_gains(&traj)).unwrap() - lyapunov(&z(k - 1), &traj_gains(&traj)).unwrap())
            / (2.0 * h);
        let x = RegressorSignal::preset_sinusoid().sample(traj.times[k]);
        let rate = lyapunov_rate_for(TunerVariant::Acceleration, &z(k), &x, &traj_gains(&traj)).unwrap();
        assert!(
            (fd - rate).abs() <= 1e-6 * (1.0 + rate.abs()),
            "k = {k}: fd {fd}, rate {rate}"
        );
    }
}

fn traj_gains(traj: &tuner_lab::sim::Trajectory) -> TunerGains {
    let n = traj.dim();
    let p = &traj.lyapunov.p_v;
    let m2 = p.view((0, 0), (n, n)).into_owned();
    let m1 = (p.view((0, n), (n, n)) * 2.0).try_inverse().unwrap();
    let m3 = p.view((n, n), (n, n)).into_owned();
    TunerGains::acceleration(m1, m2, m3).unwrap()
}

#[test]
fn exp_sinusoid_without_growth_is_a_sinusoid() {
    let (a, w, ph) = (vec![1.0, 0.5], vec![1.0, 3.0], vec![0.2, -1.0]);
    let plain = RegressorSignal::sinusoid(a.clone(), w.clone(), ph.clone());
    let flat = RegressorSignal::exp_sinusoid(a, w, ph, 0.0);
    for k in 0..1000 {
        let t = k as f64 * 0.037;
        assert_eq!(plain.sample(t), flat.sample(t));
    }
}

#[test]
fn zero_noise_stochastic_run_is_plain_euler() {
    let mut s = Scenario::figure(TunerVariant::Acceleration, RegressorSignal::preset_pseudo_random())
        .with_horizon(2.0)
        .with_step(1e-3)
        .with_noise(NoiseModel::white(0.0, 3));
    s.p = DVector::zeros(2);
    s.phat0 = dvector![1.0, -0.8];
    let traj = integrate_stochastic(&s).unwrap();
    let mut z = s.z0();
    for k in 0..s.num_steps() {
        let m = stacked_system(&s.regressor.sample(s.time(k)), &s.gains).unwrap();
        let az = &m.a * &z;
        z.axpy(s.step, &az, 1.0);
        assert_eq!(traj.q(k + 1), z.rows(0, 2).into_owned(), "step {k}");
    }
}

#[test]
fn stochastic_runs_are_deterministic_per_seed() {
    let s = Scenario::figure(TunerVariant::Velocity, RegressorSignal::preset_sinusoid())
        .with_horizon(3.0)
        .with_step(1e-4)
        .with_noise(NoiseModel::white(0.7, 99));
    let a = integrate_stochastic(&s).unwrap();
    assert_eq!(a, integrate_stochastic(&s).unwrap());
    let mut other = s.clone();
    other.noise.seed = 100;
    assert_ne!(a.final_q(), integrate_stochastic(&other).unwrap().final_q());
}

#[test]
fn scalar_velocity_variance_settles_at_half() {
    let s = scalar(TunerVariant::Velocity, TunerGains::identity_velocity(1), 1e-3)
        .with_horizon(10.0)
        .with_noise(NoiseModel::white(1.0, 5));
    let rep = monte_carlo(&s, 2000, s.num_steps()).unwrap();
    let k = rep.times.len() - 1;
    let var = rep.mc_variance(k, 0);
    // Standard error of a sample variance of normals: σ²√(2/(N−1)).
    let se = 0.5 * (2.0 / 1999.0f64).sqrt();
    assert!((var - 0.5).abs() <= 3.0 * se, "variance {var}, 3 SE {}", 3.0 * se);
}

#[test]
fn noise_free_monte_carlo_reproduces_the_mean() {
    let s =
        scalar(TunerVariant::Velocity, TunerGains::identity_velocity(1), 1e-3).with_noise(NoiseModel::white(0.0, 1));
    let rep = monte_carlo(&s, 4, 100).unwrap();
    let traj = integrate_stochastic(&s).unwrap();
    for (k, t) in rep.times.iter().enumerate() {
        let grid = (t / s.step).round() as usize;
        let q = traj.q(grid)[0];
        assert!((rep.mc_mean[k][0] - q).abs() <= 1e-14 * q.abs());
        assert!((rep.mc_second_moment[k][(0, 0)] - q * q).abs() <= 1e-14 * q * q);
    }
}

#[test]
fn sequential_and_parallel_reports_are_identical() {
    let s = Scenario::figure(TunerVariant::Acceleration, RegressorSignal::preset_step())
        .with_horizon(1.0)
        .with_step(1e-3)
        .with_noise(NoiseModel::white(0.3, 12));
    let seq = monte_carlo_with(&s, 37, 50, Execution::Sequential).unwrap();
    let par = monte_carlo_with(&s, 37, 50, Execution::Parallel).unwrap();
    assert_eq!(seq, par);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scalar_gain_validity_is_the_product_condition(m1 in 0.05f64..5.0, m2 in 0.05f64..5.0, m3 in 0.05f64..5.0) {
        let product = 4.0 * m1 * m1 * m2 * m3;
        prop_assume!((product - 1.0).abs() > 1e-6);
        let report = validate_gains(&TunerGains::scalar_acceleration(2, m1, m2, m3));
        prop_assert_eq!(report.ok, product > 1.0);
        prop_assert_eq!(report.is_violated(GainCondition::ScalarProduct), product <= 1.0);
    }

    #[test]
    fn asymmetric_gain_is_flagged(skew in 0.01f64..1.0) {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, skew, 0.0, 2.0]);
        let g = TunerGains::Velocity { m };
        prop_assert!(validate_gains(&g).is_violated(GainCondition::Symmetric("M")));
    }
}
