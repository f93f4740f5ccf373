//! Small dense helpers shared by the batch, condensation and QP modules.

use nalgebra::{DMatrix, DVector};

/// `n` copies of the `dim`-identity stacked vertically.
pub fn stacked_identity(dim: usize, n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(dim * n, dim);
    for k in 0..n {
        out.view_mut((k * dim, 0), (dim, dim))
            .fill_diagonal(1.0);
    }
    out
}

/// Repeat a vector `n` times (the stacked constant trajectory `I * c`).
pub fn repeat_vector(v: &DVector<f64>, n: usize) -> DVector<f64> {
    DVector::from_fn(v.len() * n, |i, _| v[i % v.len()])
}

pub fn block_diagonal(block: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let (r, c) = block.shape();
    let mut out = DMatrix::zeros(r * n, c * n);
    for k in 0..n {
        out.view_mut((k * r, k * c), (r, c)).copy_from(block);
    }
    out
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Extreme eigenvalues of a symmetric matrix, `(min, max)`.
pub fn symmetric_eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Max absolute asymmetry relative to the largest entry.
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() / scale
}

/// Mean of the `n` blocks of a stacked vector.
pub fn block_mean(stacked: &DVector<f64>, dim: usize) -> DVector<f64> {
    let n = stacked.len() / dim;
    let mut out = DVector::zeros(dim);
    for k in 0..n {
        out += stacked.rows(k * dim, dim);
    }
    out / n as f64
}
