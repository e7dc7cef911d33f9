use nalgebra::{DMatrix, DVector};

use super::trajectory::euler_maruyama;
use crate::analysis::{self, AnalyticCovariance};
use crate::model::rng::trial_seed;
use crate::model::Scenario;
use crate::{Error, Result};

/// How Monte Carlo trials are scheduled.
///
/// Both modes reduce per-trial moments over the same fixed binary tree, so
/// they return bitwise-identical reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon work stealing; falls back to sequential without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Monte Carlo moments of `q(t)` with the matching analytic curves.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceReport {
    pub times: Vec<f64>,
    pub trials: usize,
    pub mc_mean: Vec<DVector<f64>>,
    /// Standard error of each mean component.
    pub mc_mean_se: Vec<DVector<f64>>,
    /// Estimate of `E{q qᵀ(t)}`.
    pub mc_second_moment: Vec<DMatrix<f64>>,
    /// Standard error of each second-moment entry.
    pub mc_second_moment_se: Vec<DMatrix<f64>>,
    /// Covariance-ODE solution on the recorded points.
    pub analytic: Option<AnalyticCovariance>,
    /// Upper bound on `E{q qᵀ(t)}`: mean term plus the exact noise bound
    /// (scalar acceleration gains with `q̇(0) = 0` only).
    pub bound: Option<Vec<DMatrix<f64>>>,
}

impl CovarianceReport {
    pub fn analytic_second_moment(&self) -> Option<&[DMatrix<f64>]> {
        self.analytic.as_ref().map(|a| a.second_moment.as_slice())
    }

    /// Sample variance of component `i` at recorded point `k`.
    pub fn mc_variance(&self, k: usize, i: usize) -> f64 {
        let m = self.mc_mean[k][i];
        let n = self.trials as f64;
        (self.mc_second_moment[k][(i, i)] - m * m) * n / (n - 1.0)
    }
}

/// Layout of one trial's flattened statistics at one recorded point:
/// `q_i`, `q_i²`, `q_i q_j` (i ≤ j), `(q_i q_j)²`.
struct Layout {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl Layout {
    fn new(n: usize) -> Self {
        let pairs = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        Layout { n, pairs }
    }

    fn width(&self) -> usize {
        2 * self.n + 2 * self.pairs.len()
    }

    fn record(&self, q: &[f64], out: &mut [f64]) {
        let (n, m) = (self.n, self.pairs.len());
        for i in 0..n {
            out[i] = q[i];
            out[n + i] = q[i] * q[i];
        }
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            let v = q[i] * q[j];
            out[2 * n + p] = v;
            out[2 * n + m + p] = v * v;
        }
    }
}

fn run_trial(s: &Scenario, layout: &Layout, stride: usize, points: usize, trial: usize) -> Result<Vec<f64>> {
    let w = layout.width();
    let n = s.dim();
    let mut stats = vec![0.0; points * w];
    let seed = trial_seed(s.noise.seed, trial as u64);
    euler_maruyama(s, seed, |k, z| {
        if k % stride == 0 && k / stride < points {
            let p = k / stride;
            layout.record(&z.as_slice()[..n], &mut stats[p * w..(p + 1) * w]);
        }
        Ok(())
    })
    .map_err(|e| Error::Trial {
        trial,
        source: Box::new(e),
    })?;
    Ok(stats)
}

/// Sums trial statistics over a fixed balanced binary tree on `[lo, hi)`.
fn pairwise_sum<F>(lo: usize, hi: usize, exec: Execution, leaf: &F) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync,
{
    if hi - lo == 1 {
        return leaf(lo);
    }
    let mid = lo + (hi - lo) / 2;
    let (left, right) = match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => rayon::join(
            || pairwise_sum(lo, mid, exec, leaf),
            || pairwise_sum(mid, hi, exec, leaf),
        ),
        _ => (pairwise_sum(lo, mid, exec, leaf), pairwise_sum(mid, hi, exec, leaf)),
    };
    // Lowest failing trial wins so errors are schedule-independent.
    let mut left = left?;
    let right = right?;
    left.iter_mut().zip(&right).for_each(|(a, b)| *a += b);
    Ok(left)
}

/// [`monte_carlo_with`] using the default [`Execution`].
pub fn monte_carlo(s: &Scenario, trials: usize, record_stride: usize) -> Result<CovarianceReport> {
    monte_carlo_with(s, trials, record_stride, Execution::default())
}

/// Runs `trials` independent Euler–Maruyama paths and returns pointwise mean
/// and second moment of `q` at every `record_stride`-th grid point.
///
/// Trial `i` uses the seed `trial_seed(noise.seed, i)`.
pub fn monte_carlo_with(
    s: &Scenario,
    trials: usize,
    record_stride: usize,
    exec: Execution,
) -> Result<CovarianceReport> {
    s.validate()?;
    if trials < 2 {
        return Err(Error::Precondition {
            operation: "monte_carlo",
            reason: format!("need at least 2 trials, got {trials}"),
        });
    }
    if record_stride == 0 {
        return Err(Error::Precondition {
            operation: "monte_carlo",
            reason: "record stride must be positive".into(),
        });
    }
    let n = s.dim();
    let layout = Layout::new(n);
    let points = s.num_steps() / record_stride + 1;
    let sums = pairwise_sum(0, trials, exec, &|i| run_trial(s, &layout, record_stride, points, i))?;

    let w = layout.width();
    let m = layout.pairs.len();
    let nt = trials as f64;
    let se = |sum: f64, sum_sq: f64| {
        let mean = sum / nt;
        let var = ((sum_sq / nt - mean * mean) * nt / (nt - 1.0)).max(0.0);
        (var / nt).sqrt()
    };
    let mut report = CovarianceReport {
        times: (0..points).map(|p| s.time(p * record_stride)).collect(),
        trials,
        mc_mean: Vec::with_capacity(points),
        mc_mean_se: Vec::with_capacity(points),
        mc_second_moment: Vec::with_capacity(points),
        mc_second_moment_se: Vec::with_capacity(points),
        analytic: None,
        bound: None,
    };
    for p in 0..points {
        let st = &sums[p * w..(p + 1) * w];
        report.mc_mean.push(DVector::from_fn(n, |i, _| st[i] / nt));
        report.mc_mean_se.push(DVector::from_fn(n, |i, _| se(st[i], st[n + i])));
        let mut mom = DMatrix::zeros(n, n);
        let mut mom_se = DMatrix::zeros(n, n);
        for (k, &(i, j)) in layout.pairs.iter().enumerate() {
            let v = st[2 * n + k] / nt;
            let e = se(st[2 * n + k], st[2 * n + m + k]);
            mom[(i, j)] = v;
            mom[(j, i)] = v;
            mom_se[(i, j)] = e;
            mom_se[(j, i)] = e;
        }
        report.mc_second_moment.push(mom);
        report.mc_second_moment_se.push(mom_se);
    }

    let analytic = analysis::covariance_ode_strided(s, record_stride)?;
    report.bound = analytic.bound.as_ref().map(|b| {
        b.iter()
            .zip(&analytic.mean_term)
            .map(|(bound, mean)| bound + mean)
            .collect()
    });
    report.analytic = Some(analytic);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NoiseModel, RegressorSignal, TunerGains, TunerVariant};
    use crate::sim::integrate_stochastic;
    use nalgebra::dvector;

    fn scalar_noisy(sigma: f64, horizon: f64) -> Scenario {
        Scenario::from_error(
            TunerVariant::Velocity,
            TunerGains::identity_velocity(1),
            RegressorSignal::step(vec![1.0]),
            dvector![0.0],
            dvector![2.0],
            horizon,
            1e-3,
        )
        .with_noise(NoiseModel::white(sigma, 11))
    }

    #[test]
    fn noise_free_moments_are_the_deterministic_path() {
        let mut s = Scenario::figure(TunerVariant::Acceleration, RegressorSignal::preset_sinusoid())
            .with_horizon(2.0)
            .with_noise(NoiseModel::white(0.0, 5));
        s.step = 1e-3;
        let rep = monte_carlo(&s, 3, 100).unwrap();
        let path = integrate_stochastic(&s).unwrap();
        for (p, t) in rep.times.iter().enumerate() {
            let k = p * 100;
            assert_eq!(*t, path.times[k]);
            let q = path.q(k);
            assert!((&rep.mc_mean[p] - &q).amax() < 1e-12);
            assert!((&rep.mc_second_moment[p] - &q * q.transpose()).amax() < 1e-12);
        }
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let s = scalar_noisy(1.0, 1.0);
        let a = monte_carlo_with(&s, 37, 50, Execution::Sequential).unwrap();
        let b = monte_carlo_with(&s, 37, 50, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn second_moment_is_symmetric_psd() {
        let s = Scenario::figure(TunerVariant::Velocity, RegressorSignal::preset_sinusoid())
            .with_horizon(3.0)
            .with_noise(NoiseModel::white(1.0, 2));
        let rep = monte_carlo(&s, 50, 100).unwrap();
        for m in &rep.mc_second_moment {
            assert_eq!(m, &m.transpose());
            assert!(crate::linalg::min_eigenvalue(m) >= -1e-10);
        }
    }

    #[test]
    fn preconditions() {
        let s = scalar_noisy(1.0, 1.0);
        assert!(monte_carlo(&s, 1, 10).is_err());
        assert!(monte_carlo(&s, 10, 0).is_err());
    }

    #[test]
    fn trial_failures_carry_the_trial_index() {
        let mut s = scalar_noisy(1.0, 50.0);
        s.gains = TunerGains::velocity(nalgebra::DMatrix::from_element(1, 1, -1.0)).unwrap();
        match monte_carlo(&s, 4, 10) {
            Err(Error::Trial { trial, source }) => {
                assert_eq!(trial, 0);
                assert!(source.is_numerical_abort());
            }
            other => panic!("{other:?}"),
        }
    }
}
