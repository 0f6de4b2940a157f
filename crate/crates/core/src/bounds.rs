//! Upper bounds on `Pr(PMEPR > gamma)` built from fourth moments.
//!
//! All bounds start from the per-codeword inequality
//!
//! ```text
//! max_t |s(t)|^4 <= K(2K-1)/2 * sum_k (c* C_k c)^2 + (c* C^_k c)^2
//! ```
//!
//! Averaging the right-hand side gives the statistic `R`. Markov's
//! inequality then gives `R / (P_av^2 gamma^2)`. When the peak power has
//! bounded support `[a, b]`, a Chernoff argument with Hoeffding's lemma gives
//! an exponential bound. For circularly-symmetric Gaussian codewords the
//! expectation has a closed form in the covariance.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, QamConstellation};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::optimizer::UnitarySet;
use crate::signal::{linear_to_db, GammaGrid};
use crate::spectral::SpectralBasis;

/// Eigenvalues down to this value are accepted as PSD and clipped to zero.
pub const PSD_TOL: f64 = 1e-10;

/// `K(2K - 1) / 2`, the constant in front of every quartic sum.
pub fn quartic_scale(k: usize) -> f64 {
    let k = k as f64;
    k * (2.0 * k - 1.0) / 2.0
}

/// `R({W_n C_n}) = K(2K-1)/(2|C|) sum_n sum_{c in C_n} quartic_sum(W_n c)`.
pub fn r_statistic(codebook: &Codebook, basis: &SpectralBasis, unitaries: Option<&UnitarySet>) -> Result<f64> {
    let k = codebook.carriers();
    if basis.carriers() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: basis.carriers(),
        });
    }
    if let Some(u) = unitaries {
        u.check_compatible(codebook)?;
    }
    let owner = codebook.subset_of();
    let terms = codebook
        .codewords()
        .par_iter()
        .zip(owner.par_iter())
        .map(|(c, &n)| match unitaries {
            Some(u) => basis.quartic_sum_of(&linalg::matvec(u.matrix(n), c.symbols())),
            None => basis.quartic_sum_of(c.symbols()),
        })
        .collect::<Result<Vec<f64>>>()?;
    // sequential sum keeps the value independent of thread scheduling
    let total: f64 = terms.iter().sum();
    Ok(quartic_scale(k) * total / codebook.len() as f64)
}

/// `K^2 (2K - 1)`: the value `R` cannot go below when every subset Gram
/// matrix is the identity.
pub fn jensen_floor(k: usize) -> f64 {
    let k = k as f64;
    k * k * (2.0 * k - 1.0)
}

/// The Jensen lower bound on `R({W_n C_n})` for the given precoders:
/// `K(2K-1)/2 sum_n |C_n|/|C| sum_k Tr(C_k W_n g_n W_n*)^2 + Tr(C^_k W_n g_n W_n*)^2`.
pub fn jensen_lower_bound(codebook: &Codebook, basis: &SpectralBasis, unitaries: Option<&UnitarySet>) -> Result<f64> {
    let k = codebook.carriers();
    if let Some(u) = unitaries {
        u.check_compatible(codebook)?;
    }
    let v = basis.v();
    let vh = basis.v_hat();
    let mut total = 0.0;
    for n in 0..codebook.n_subsets() {
        let g = crate::codebook::subset_gram(codebook, n)?;
        let g = match unitaries {
            Some(u) => u.matrix(n) * g * u.matrix(n).adjoint(),
            None => g,
        };
        // Tr(C_k X) = (V X V*)_kk
        let a = &v * &g * v.adjoint();
        let b = &vh * &g * vh.adjoint();
        let s: f64 = (0..k).map(|i| a[(i, i)].re.powi(2) + b[(i, i)].re.powi(2)).sum();
        total += s * codebook.subset_len(n)? as f64 / codebook.len() as f64;
    }
    Ok(quartic_scale(k) * total)
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::InvalidParameter(format!("{name} must be positive, got {x}")));
    }
    Ok(())
}

/// `R / (P_av^2 gamma^2)` at each grid point; values above 1 are kept.
pub fn markov_ccdf_bound(r_value: f64, p_av: f64, grid: &GammaGrid) -> Result<Vec<f64>> {
    check_positive("P_av", p_av)?;
    Ok(grid.values().iter().map(|g| r_value / (p_av * p_av * g * g)).collect())
}

/// How the width of the peak-power support enters the exponential bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoeffdingRange {
    /// Denominator `b^2 - a^2`, the closed form as usually stated.
    #[default]
    Published,
    /// Denominator `(b^2 - a^2)^2`, the squared range that Hoeffding's lemma
    /// requires for a variable supported on `[a^2, b^2]`.
    Squared,
}

impl HoeffdingRange {
    /// Width term `w` in `exp(-s x + w s^2 / 8)`.
    pub fn width(self, a: f64, b: f64) -> f64 {
        let d = b * b - a * a;
        match self {
            HoeffdingRange::Published => d,
            HoeffdingRange::Squared => d * d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoeffdingPoint {
    /// Bound value; 1 where the point is not valid.
    pub value: f64,
    /// `P_av^2 gamma^2 > R`.
    pub valid: bool,
}

/// Chernoff exponent `-s (P_av^2 gamma^2 - R) + w s^2 / 8` before optimisation.
pub fn chernoff_exponent(s: f64, r_value: f64, width: f64, p_av: f64, gamma: f64) -> f64 {
    -s * (p_av * p_av * gamma * gamma - r_value) + width * s * s / 8.0
}

/// Minimiser `s = 4 (P_av^2 gamma^2 - R) / w` of the Chernoff exponent.
pub fn optimal_chernoff_parameter(r_value: f64, width: f64, p_av: f64, gamma: f64) -> f64 {
    4.0 * (p_av * p_av * gamma * gamma - r_value) / width
}

/// `exp(-2 (P_av^2 gamma^2 - R)^2 / w)` where `P_av^2 gamma^2 > R`.
pub fn hoeffding_ccdf_bound(
    r_value: f64,
    a: f64,
    b: f64,
    p_av: f64,
    grid: &GammaGrid,
    range: HoeffdingRange,
) -> Result<Vec<HoeffdingPoint>> {
    check_positive("P_av", p_av)?;
    if !(a >= 0.0 && b > a) {
        return Err(Error::InvalidParameter(format!(
            "need b > a >= 0, got a = {a}, b = {b}"
        )));
    }
    let width = range.width(a, b);
    Ok(grid
        .values()
        .iter()
        .map(|&g| {
            let margin = p_av * p_av * g * g - r_value;
            if margin > 0.0 {
                HoeffdingPoint {
                    value: (-2.0 * margin * margin / width).exp(),
                    valid: true,
                }
            } else {
                HoeffdingPoint {
                    value: 1.0,
                    valid: false,
                }
            }
        })
        .collect())
}

/// `(0, 2 K^2 D^2 (sqrt(M) - 1)^2)` for square QAM.
pub fn qam_endpoints(constellation: &QamConstellation, k: usize) -> (f64, f64) {
    (0.0, (k * k) as f64 * constellation.peak_energy())
}

/// `(min ||c||^2, K max ||c||^2)` over the codebook. Unitary precoding
/// preserves norms, so these hold for every precoded codebook as well.
pub fn codebook_endpoints(codebook: &Codebook) -> (f64, f64) {
    (codebook.min_power(), codebook.carriers() as f64 * codebook.max_power())
}

/// Markov bound for `c ~ CN(0, cov)`:
/// `3K(2K-1)/(2 P_av^2 gamma^2) sum_k Tr(C_k cov)^2 + Tr(C^_k cov)^2`, `P_av = Tr(cov)`.
pub fn gaussian_ccdf_bound(cov: &CMatrix, basis: &SpectralBasis, grid: &GammaGrid) -> Result<Vec<f64>> {
    let k = basis.carriers();
    linalg::check_square(cov, k)?;
    linalg::psd_eigenvalues(cov, PSD_TOL)?;
    let p_av = cov.trace().re;
    check_positive("Tr(cov)", p_av)?;
    let a = basis.v() * cov * basis.v().adjoint();
    let b = basis.v_hat() * cov * basis.v_hat().adjoint();
    let sum: f64 = (0..k).map(|i| a[(i, i)].re.powi(2) + b[(i, i)].re.powi(2)).sum();
    let r_gauss = 3.0 * quartic_scale(k) * sum;
    markov_ccdf_bound(r_gauss, p_av, grid)
}

/// Real embedding `[[Re Z, -Im Z], [Im Z, Re Z]]`.
pub fn real_embedding(z: &CMatrix) -> DMatrix<f64> {
    let (r, c) = z.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let v = z[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarticMoment {
    /// `E[(c* G c)^2]` for `c ~ CN(0, cov)`.
    pub exact: f64,
    /// `3 Tr(G cov)^2`.
    pub bound: f64,
}

/// Fourth moment of a Hermitian form of a circular Gaussian vector:
/// `(1/4)[Tr(T(G)T(S))^2 + 2 Tr(T(G)T(S)T(G)T(S))]` with `T` the real embedding.
pub fn gaussian_quartic_moment(g: &CMatrix, cov: &CMatrix) -> Result<QuarticMoment> {
    let k = g.nrows();
    linalg::check_square(g, k)?;
    linalg::check_square(cov, k)?;
    linalg::psd_eigenvalues(g, PSD_TOL)?;
    linalg::psd_eigenvalues(cov, PSD_TOL)?;
    let tg = real_embedding(g);
    let ts = real_embedding(cov);
    let m = &tg * &ts;
    let exact = 0.25 * (m.trace().powi(2) + 2.0 * (&m * &m).trace());
    let bound = 3.0 * linalg::trace_of_product(g, cov).re.powi(2);
    Ok(QuarticMoment { exact, bound })
}

/// Everything reported by the `bounds` subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub gamma: Vec<f64>,
    pub markov: Vec<f64>,
    pub hoeffding: Vec<HoeffdingPoint>,
    pub summary: BoundSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub struct BoundSummary {
    #[serde(rename = "R")]
    pub r_value: f64,
    pub a: f64,
    pub b: f64,
    pub p_av: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub hoeffding_range: HoeffdingRange,
}

impl BoundReport {
    /// Markov and Hoeffding bounds for a (possibly precoded) codebook with the
    /// codebook endpoints `a = min ||c||^2`, `b = K max ||c||^2`.
    pub fn compute(
        codebook: &Codebook,
        basis: &SpectralBasis,
        unitaries: Option<&UnitarySet>,
        grid: &GammaGrid,
        range: HoeffdingRange,
    ) -> Result<Self> {
        let r_value = r_statistic(codebook, basis, unitaries)?;
        let (a, b) = codebook_endpoints(codebook);
        let p_av = codebook.p_av();
        Ok(BoundReport {
            gamma: grid.values().to_vec(),
            markov: markov_ccdf_bound(r_value, p_av, grid)?,
            hoeffding: hoeffding_ccdf_bound(r_value, a, b, p_av, grid, range)?,
            summary: BoundSummary {
                r_value,
                a,
                b,
                p_av,
                k: codebook.carriers(),
                n: codebook.n_subsets(),
                hoeffding_range: range,
            },
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "gamma_db,markov,hoeffding,hoeffding_valid")?;
        for ((g, m), h) in self.gamma.iter().zip(&self.markov).zip(&self.hoeffding) {
            writeln!(out, "{},{},{},{}", linear_to_db(*g), m, h.value, h.valid)?;
        }
        Ok(())
    }

    pub fn write_sidecar<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, &self.summary)?;
        writeln!(out)?;
        Ok(())
    }
}
