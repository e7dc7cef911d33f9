//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Relative threshold for the positive-definiteness test: `λ_min > PD_RELATIVE · λ_max`.
pub const PD_RELATIVE: f64 = 1e-10;

/// Elementwise symmetry tolerance for gain matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Scale-aware positive-definiteness test on the symmetric part.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    let ev = sym_eigenvalues(m);
    match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) => lo > 0.0 && lo > PD_RELATIVE * hi.abs(),
        _ => false,
    }
}

/// If `m` equals `c·I` to within `tol` (relative to |c|), returns `c`.
pub fn as_scalar_multiple(m: &DMatrix<f64>, tol: f64) -> Option<f64> {
    if m.nrows() == 0 || m.nrows() != m.ncols() {
        return None;
    }
    let c = m[(0, 0)];
    let scale = c.abs().max(f64::MIN_POSITIVE);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let target = if i == j { c } else { 0.0 };
            if (m[(i, j)] - target).abs() > tol * scale {
                return None;
            }
        }
    }
    Some(c)
}

/// `x xᵀ`
pub fn outer(x: &DVector<f64>) -> DMatrix<f64> {
    x * x.transpose()
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
