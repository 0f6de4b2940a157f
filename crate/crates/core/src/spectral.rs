//! Aperiodic correlation, the cyclic/negacyclic shift matrices and their
//! Fourier eigendecompositions, and the quartic spectral sum that drives
//! both the CCDF bounds and the optimizer.
//!
//! With 0-based indices the two unitary bases are
//!
//! ```text
//! V[m, n]  = K^-1/2 exp(-2 pi j m n / K)
//! V^[m, n] = K^-1/2 exp(-2 pi j n (m / K + 1 / 2K))
//! ```
//!
//! so `alpha = V c` is a scaled DFT of `c`, and `beta = V^ c` is the DFT of
//! `c` after a half-bin frequency shift. `c* C_k c = |alpha_k|^2` and
//! `c* C^_k c = |beta_k|^2`, which is how every quadratic form in this crate
//! is evaluated outside of the dense test paths.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};

use crate::codebook::Codeword;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// Largest `K` for which `build_basis` checks the eigendecompositions with
/// dense reconstruction; above it, random probes are used instead.
pub const DEFAULT_DENSE_CAP: usize = 64;

/// `rho(k) = sum_l A_l conj(A_{l+k})` for `k = 0..K`.
pub fn aperiodic_corr(c: &Codeword) -> Vec<Complex64> {
    let a = c.symbols();
    let k = a.len();
    (0..k)
        .map(|shift| (0..k - shift).map(|l| a[l] * a[l + shift].conj()).sum())
        .collect()
}

/// Which of the two shift matrices to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shift {
    /// `[[0, I_k], [I_{K-k}, 0]]`, quadratic form `rho(k) + conj rho(K-k)`.
    Cyclic,
    /// `[[0, -I_k], [I_{K-k}, 0]]`, quadratic form `rho(k) - conj rho(K-k)`.
    Negacyclic,
}

impl Shift {
    fn sign(self) -> f64 {
        match self {
            Shift::Cyclic => 1.0,
            Shift::Negacyclic => -1.0,
        }
    }
}

/// The block shift matrix `B^(k)` for `0 <= k < K`.
pub fn b_matrix(k_total: usize, k: usize, shift: Shift) -> Result<DMatrix<f64>> {
    if k >= k_total {
        return Err(Error::IndexOutOfRange { index: k, len: k_total });
    }
    let mut b = DMatrix::zeros(k_total, k_total);
    for i in 0..k {
        b[(i, k_total - k + i)] = shift.sign();
    }
    for i in 0..k_total - k {
        b[(k + i, i)] = 1.0;
    }
    Ok(b)
}

/// Transform machinery for one carrier count `K`.
///
/// Immutable once built; FFT plans are shared behind `Arc` so the basis can
/// be used from many threads at once.
#[derive(Clone)]
pub struct SpectralBasis {
    k: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `exp(-pi j n / K)`, the half-bin shift applied before the DFT for `V^`.
    half_shift: Vec<Complex64>,
    norm: f64,
}

impl std::fmt::Debug for SpectralBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralBasis").field("k", &self.k).finish()
    }
}

/// Builds the basis and verifies `B_cyc^(k) = V* D^(k) V` and
/// `B_neg^(k) = V^* D^^(k) V^` for every `k`.
pub fn build_basis(k: usize) -> Result<SpectralBasis> {
    build_basis_with_cap(k, DEFAULT_DENSE_CAP)
}

pub fn build_basis_with_cap(k: usize, dense_cap: usize) -> Result<SpectralBasis> {
    let basis = SpectralBasis::unchecked(k)?;
    if k <= dense_cap {
        basis.check_dense_reconstruction(1e-10)?;
    } else {
        basis.check_probe_reconstruction(4, 1e-10)?;
    }
    Ok(basis)
}

impl SpectralBasis {
    fn unchecked(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("K must be at least 2, got {k}")));
        }
        let mut planner = FftPlanner::new();
        let half_shift = (0..k)
            .map(|n| Complex64::from_polar(1.0, -PI * n as f64 / k as f64))
            .collect();
        Ok(SpectralBasis {
            k,
            forward: planner.plan_fft_forward(k),
            inverse: planner.plan_fft_inverse(k),
            half_shift,
            norm: (k as f64).sqrt(),
        })
    }

    pub fn carriers(&self) -> usize {
        self.k
    }

    /// Dense `V`.
    pub fn v(&self) -> CMatrix {
        let k = self.k as f64;
        CMatrix::from_fn(self.k, self.k, |m, n| {
            Complex64::from_polar(1.0, -2.0 * PI * (m * n) as f64 / k) / self.norm
        })
    }

    /// Dense `V^`.
    pub fn v_hat(&self) -> CMatrix {
        let k = self.k as f64;
        CMatrix::from_fn(self.k, self.k, |m, n| {
            let phase = -2.0 * PI * n as f64 * (m as f64 / k + 0.5 / k);
            Complex64::from_polar(1.0, phase) / self.norm
        })
    }

    /// Diagonal of `D^(shift)`: `exp(-2 pi j shift n / K)`.
    pub fn d_diag(&self, shift: usize) -> Vec<Complex64> {
        let k = self.k as f64;
        (0..self.k)
            .map(|n| Complex64::from_polar(1.0, -2.0 * PI * (shift * n) as f64 / k))
            .collect()
    }

    /// Diagonal of `D^^(shift)`: `exp(-2 pi j shift (n / K + 1 / 2K))`.
    pub fn d_hat_diag(&self, shift: usize) -> Vec<Complex64> {
        let k = self.k as f64;
        (0..self.k)
            .map(|n| Complex64::from_polar(1.0, -2.0 * PI * shift as f64 * (n as f64 / k + 0.5 / k)))
            .collect()
    }

    /// Dense rank-one `C_k = V* G_k V` (0-based `k`).
    pub fn c_operator(&self, k: usize) -> Result<CMatrix> {
        self.rank_one(&self.v(), k)
    }

    /// Dense rank-one `C^_k = V^* G_k V^` (0-based `k`).
    pub fn c_hat_operator(&self, k: usize) -> Result<CMatrix> {
        self.rank_one(&self.v_hat(), k)
    }

    fn rank_one(&self, basis: &CMatrix, k: usize) -> Result<CMatrix> {
        if k >= self.k {
            return Err(Error::IndexOutOfRange { index: k, len: self.k });
        }
        let row = basis.row(k);
        Ok(CMatrix::from_fn(self.k, self.k, |i, j| row[i].conj() * row[j]))
    }

    fn check_len(&self, x: &[Complex64]) -> Result<()> {
        if x.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `alpha = V x`.
    pub fn alpha(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(x)?;
        let mut buf = x.to_vec();
        self.forward.process(&mut buf);
        buf.iter_mut().for_each(|z| *z /= self.norm);
        Ok(buf)
    }

    /// `beta = V^ x`.
    pub fn beta(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(x)?;
        let mut buf: Vec<Complex64> = x.iter().zip(&self.half_shift).map(|(a, t)| a * t).collect();
        self.forward.process(&mut buf);
        buf.iter_mut().for_each(|z| *z /= self.norm);
        Ok(buf)
    }

    /// `V* y`.
    pub fn alpha_adjoint(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(y)?;
        let mut buf = y.to_vec();
        self.inverse.process(&mut buf);
        buf.iter_mut().for_each(|z| *z /= self.norm);
        Ok(buf)
    }

    /// `V^* y`.
    pub fn beta_adjoint(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(y)?;
        let mut buf = y.to_vec();
        self.inverse.process(&mut buf);
        for (z, t) in buf.iter_mut().zip(&self.half_shift) {
            *z = *z * t.conj() / self.norm;
        }
        Ok(buf)
    }

    /// `sum_k |alpha_k|^4 + |beta_k|^4` for `x` already precoded.
    pub fn quartic_sum_of(&self, x: &[Complex64]) -> Result<f64> {
        let a = self.alpha(x)?;
        let b = self.beta(x)?;
        Ok(a.iter().chain(&b).map(|z| z.norm_sqr().powi(2)).sum())
    }

    /// `sum_k (x* C_k x) C_k x + (x* C^_k x) C^_k x`, evaluated through the
    /// transforms as `V* (|alpha|^2 alpha) + V^* (|beta|^2 beta)`.
    pub fn quartic_direction(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let a: Vec<Complex64> = self.alpha(x)?.into_iter().map(|z| z * z.norm_sqr()).collect();
        let b: Vec<Complex64> = self.beta(x)?.into_iter().map(|z| z * z.norm_sqr()).collect();
        let pa = self.alpha_adjoint(&a)?;
        let pb = self.beta_adjoint(&b)?;
        Ok(pa.iter().zip(&pb).map(|(x, y)| x + y).collect())
    }

    fn check_dense_reconstruction(&self, tol: f64) -> Result<()> {
        let v = self.v();
        let vh = self.v_hat();
        for (name, m) in [("V", &v), ("V^", &vh)] {
            let err = linalg::unitarity_error(m);
            if err > tol {
                return Err(Error::IdentityCheck(format!("{name} not unitary: {err:e}")));
            }
        }
        for shift in 0..self.k {
            for (kind, basis, diag) in [
                (Shift::Cyclic, &v, self.d_diag(shift)),
                (Shift::Negacyclic, &vh, self.d_hat_diag(shift)),
            ] {
                let b = b_matrix(self.k, shift, kind)?.map(|x| Complex64::new(x, 0.0));
                let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
                let err = (b - basis.adjoint() * d * basis).norm();
                if err > tol {
                    return Err(Error::IdentityCheck(format!(
                        "{kind:?} shift {shift} reconstruction error {err:e}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_probe_reconstruction(&self, probes: usize, tol: f64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.k as u64);
        for _ in 0..probes {
            let x: Vec<Complex64> = (0..self.k)
                .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                .collect();
            let scale = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            for shift in 0..self.k {
                for kind in [Shift::Cyclic, Shift::Negacyclic] {
                    let direct = apply_shift(&x, shift, kind);
                    let via = match kind {
                        Shift::Cyclic => {
                            let a: Vec<_> = self
                                .alpha(&x)?
                                .iter()
                                .zip(self.d_diag(shift))
                                .map(|(a, d)| a * d)
                                .collect();
                            self.alpha_adjoint(&a)?
                        }
                        Shift::Negacyclic => {
                            let b: Vec<_> = self
                                .beta(&x)?
                                .iter()
                                .zip(self.d_hat_diag(shift))
                                .map(|(b, d)| b * d)
                                .collect();
                            self.beta_adjoint(&b)?
                        }
                    };
                    let err = direct
                        .iter()
                        .zip(&via)
                        .map(|(a, b)| (a - b).norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                    if err > tol * scale * (self.k as f64).sqrt() {
                        return Err(Error::IdentityCheck(format!(
                            "{kind:?} shift {shift} probe error {err:e}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// `B^(k) x` without forming the matrix.
fn apply_shift(x: &[Complex64], shift: usize, kind: Shift) -> Vec<Complex64> {
    let k = x.len();
    (0..k)
        .map(|i| {
            if i >= shift {
                x[i - shift]
            } else {
                x[i + k - shift] * kind.sign()
            }
        })
        .collect()
}

/// `sum_k (c* W* C_k W c)^2 + (c* W* C^_k W c)^2`, computed with two
/// length-`K` FFTs. `w = None` means the identity.
pub fn quartic_sum(c: &Codeword, basis: &SpectralBasis, w: Option<&CMatrix>) -> Result<f64> {
    match w {
        None => basis.quartic_sum_of(c.symbols()),
        Some(w) => {
            linalg::check_square(w, basis.carriers())?;
            basis.quartic_sum_of(&linalg::matvec(w, c.symbols()))
        }
    }
}
