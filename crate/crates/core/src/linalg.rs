//! Small dense complex linear-algebra helpers shared across modules.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix, column-major as stored by nalgebra.
pub type CMatrix = DMatrix<Complex64>;

pub fn identity(k: usize) -> CMatrix {
    CMatrix::identity(k, k)
}

/// `||W W* - I||_F`.
pub fn unitarity_error(w: &CMatrix) -> f64 {
    let k = w.nrows();
    (w * w.adjoint() - identity(k)).norm()
}

pub fn matvec(w: &CMatrix, x: &[Complex64]) -> Vec<Complex64> {
    debug_assert_eq!(w.ncols(), x.len());
    (0..w.nrows())
        .map(|i| w.row(i).iter().zip(x).map(|(a, b)| a * b).sum::<Complex64>())
        .collect()
}

/// `W* x`.
pub fn adjoint_matvec(w: &CMatrix, x: &[Complex64]) -> Vec<Complex64> {
    debug_assert_eq!(w.nrows(), x.len());
    (0..w.ncols())
        .map(|j| w.column(j).iter().zip(x).map(|(a, b)| a.conj() * b).sum::<Complex64>())
        .collect()
}

pub fn check_square(w: &CMatrix, k: usize) -> Result<()> {
    if w.nrows() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: w.nrows(),
        });
    }
    if w.ncols() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: w.ncols(),
        });
    }
    Ok(())
}

/// Checks Hermitian symmetry and returns the eigenvalues, clipping values in
/// `[-tol, 0)` to zero. Anything below `-tol` is rejected.
pub fn psd_eigenvalues(m: &CMatrix, tol: f64) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let scale = m.norm().max(1.0);
    let asym = (m - m.adjoint()).norm();
    if asym > 1e-9 * scale {
        return Err(Error::NotHermitian(asym));
    }
    let herm = (m + m.adjoint()).scale(0.5);
    let eig = herm.symmetric_eigenvalues();
    let mut out = Vec::with_capacity(eig.len());
    for &l in eig.iter() {
        if l < -tol {
            return Err(Error::NotPositiveSemidefinite(l));
        }
        out.push(l.max(0.0));
    }
    Ok(out)
}

/// Trace of a product without forming it: `Tr(A B) = sum_ij A_ij B_ji`.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}
