use nalgebra::DMatrix;

use crate::linalg;
use crate::model::RegressorSignal;

/// Trapezoid resolution for the excitation integral.
const PE_STEP: f64 = 1e-3;

/// Smallest eigenvalue of `∫_{t0}^{t0+window} x xᵀ dt` (trapezoidal rule).
///
/// Returns 0 for a nonpositive window.
pub fn pe_measure(r: &RegressorSignal, t0: f64, window: f64) -> f64 {
    if !(window > 0.0) {
        return 0.0;
    }
    let n = r.dim();
    let steps = ((window / PE_STEP).ceil() as usize).max(64);
    let h = window / steps as f64;
    let mut gram = DMatrix::<f64>::zeros(n, n);
    let mut x = vec![0.0; n];
    let mut add = |x: &[f64], w: f64| {
        for i in 0..n {
            for j in 0..n {
                gram[(i, j)] += w * x[i] * x[j];
            }
        }
    };
    for k in 0..steps {
        let a = t0 + k as f64 * h;
        r.sample_into(a, &mut x);
        add(&x, 0.5 * h);
        r.sample_left_into(a + h, &mut x);
        add(&x, 0.5 * h);
    }
    linalg::min_eigenvalue(&gram).max(0.0)
}
