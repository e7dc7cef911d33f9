//! Time-varying error system `ż = A(t) z + B(t) w` sampled for one step.

use nalgebra::{DMatrix, DVector};

use crate::model::{RegressorSignal, Scenario};
use crate::tuners::StackedBuilder;
use crate::Result;

/// `A`, `B` at the three RK4 abscissae of a step `[t, t+h]`: the start
/// (right value), the midpoint, and the end approached from inside the step.
pub(crate) struct StepMatrices {
    pub a: [DMatrix<f64>; 3],
    pub b: [DVector<f64>; 3],
}

pub(crate) struct ErrorSystem<'a> {
    builder: StackedBuilder,
    regressor: &'a RegressorSignal,
    x: Vec<f64>,
    dim: usize,
}

impl<'a> ErrorSystem<'a> {
    pub(crate) fn new(s: &'a Scenario) -> Result<Self> {
        let builder = StackedBuilder::new(s.variant, &s.gains)?;
        let dim = builder.state_dim();
        Ok(ErrorSystem {
            builder,
            regressor: &s.regressor,
            x: vec![0.0; s.dim()],
            dim,
        })
    }

    pub(crate) fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn zeros(&self) -> StepMatrices {
        let d = self.dim;
        StepMatrices {
            a: std::array::from_fn(|_| DMatrix::zeros(d, d)),
            b: std::array::from_fn(|_| DVector::zeros(d)),
        }
    }

    /// `A(t), B(t)` using the right value of the regressor.
    pub(crate) fn at(&mut self, t: f64, a: &mut DMatrix<f64>, b: &mut DVector<f64>) {
        self.regressor.sample_into(t, &mut self.x);
        self.builder.fill(&self.x, a, b);
    }

    pub(crate) fn load_step(&mut self, t: f64, h: f64, out: &mut StepMatrices) {
        let [a0, a1, a2] = &mut out.a;
        let [b0, b1, b2] = &mut out.b;
        self.regressor.sample_into(t, &mut self.x);
        self.builder.fill(&self.x, a0, b0);
        self.regressor.sample_into(t + 0.5 * h, &mut self.x);
        self.builder.fill(&self.x, a1, b1);
        self.regressor.sample_left_into(t + h, &mut self.x);
        self.builder.fill(&self.x, a2, b2);
    }
}

/// One RK4 step of `Φ̇ = A Φ` (any number of columns).
pub(crate) fn rk4_linear(m: &StepMatrices, h: f64, phi: &DMatrix<f64>) -> DMatrix<f64> {
    let k1 = &m.a[0] * phi;
    let k2 = &m.a[1] * (phi + &k1 * (0.5 * h));
    let k3 = &m.a[1] * (phi + &k2 * (0.5 * h));
    let k4 = &m.a[2] * (phi + &k3 * h);
    phi + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}

/// One RK4 step of `Ṗ = A P + P Aᵀ + σ² B Bᵀ`.
pub(crate) fn rk4_lyapunov(m: &StepMatrices, h: f64, noise_var: f64, p: &DMatrix<f64>) -> DMatrix<f64> {
    let f = |i: usize, p: &DMatrix<f64>| {
        let ap = &m.a[i] * p;
        let mut out = &ap + ap.transpose();
        if noise_var != 0.0 {
            out += &m.b[i] * m.b[i].transpose() * noise_var;
        }
        out
    };
    let k1 = f(0, p);
    let k2 = f(1, &(p + &k1 * (0.5 * h)));
    let k3 = f(1, &(p + &k2 * (0.5 * h)));
    let k4 = f(2, &(p + &k3 * h));
    let next = p + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
    crate::linalg::symmetrize(&next)
}
