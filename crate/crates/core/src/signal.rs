//! Baseband synthesis on a `J`-times oversampled grid, PMEPR, and empirical
//! CCDF estimation.
//!
//! The symbol duration is normalised to 1, so sample `i` of the grid is
//! `s(i / JK) = sum_k A_k exp(2 pi j k i / JK)`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::codebook::{Codebook, Codeword};
use crate::error::{Error, Result};
use crate::linalg;
use crate::optimizer::UnitarySet;
use crate::Complex64;

pub const DEFAULT_CCDF_OVERSAMPLING: usize = 16;

/// Zero-padded inverse FFT of length `J K`, reused across codewords.
#[derive(Clone)]
pub struct Oversampler {
    k: usize,
    j: usize,
    ifft: Arc<dyn Fft<f64>>,
}

impl Oversampler {
    pub fn new(k: usize, j: usize) -> Result<Self> {
        if j == 0 {
            return Err(Error::InvalidParameter("oversampling J must be at least 1".into()));
        }
        if k == 0 {
            return Err(Error::InvalidParameter("K must be positive".into()));
        }
        let ifft = FftPlanner::new().plan_fft_inverse(k * j);
        Ok(Oversampler { k, j, ifft })
    }

    pub fn carriers(&self) -> usize {
        self.k
    }

    pub fn oversampling(&self) -> usize {
        self.j
    }

    pub fn samples(&self, symbols: &[Complex64]) -> Result<Vec<Complex64>> {
        if symbols.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                found: symbols.len(),
            });
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.k * self.j];
        buf[..self.k].copy_from_slice(symbols);
        self.ifft.process(&mut buf);
        Ok(buf)
    }

    /// `max_i |s(i / JK)|^2`.
    pub fn peak_power(&self, symbols: &[Complex64]) -> Result<f64> {
        Ok(self.samples(symbols)?.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max))
    }
}

/// The `J K` samples of the baseband signal of `c`.
pub fn baseband_samples(c: &Codeword, j: usize) -> Result<Vec<Complex64>> {
    Oversampler::new(c.len(), j)?.samples(c.symbols())
}

/// Peak envelope power on the oversampled grid divided by `p_av`.
pub fn pmepr(c: &Codeword, p_av: f64, j: usize) -> Result<f64> {
    check_p_av(p_av)?;
    Ok(Oversampler::new(c.len(), j)?.peak_power(c.symbols())? / p_av)
}

fn check_p_av(p_av: f64) -> Result<()> {
    if !(p_av.is_finite() && p_av > 0.0) {
        return Err(Error::InvalidParameter(format!("P_av must be positive, got {p_av}")));
    }
    Ok(())
}

/// PMEPR of every codeword in codebook order, with codeword `c` of subset
/// `n` sent as `W_n c` when unitaries are given. `P_av` is the codebook's.
pub fn pmepr_values(codebook: &Codebook, unitaries: Option<&UnitarySet>, j: usize) -> Result<Vec<f64>> {
    let k = codebook.carriers();
    if let Some(u) = unitaries {
        u.check_compatible(codebook)?;
    }
    let over = Oversampler::new(k, j)?;
    let owner = codebook.subset_of();
    let p_av = codebook.p_av();
    codebook
        .codewords()
        .par_iter()
        .zip(owner.par_iter())
        .map(|(c, &n)| {
            let peak = match unitaries {
                Some(u) => over.peak_power(&linalg::matvec(u.matrix(n), c.symbols()))?,
                None => over.peak_power(c.symbols())?,
            };
            Ok(peak / p_av)
        })
        .collect()
}

/// Ascending grid of linear power ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaGrid(Vec<f64>);

impl GammaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("gamma grid is empty".into()));
        }
        if values.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidParameter(
                "gamma values must be finite and nonnegative".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("gamma grid must be strictly ascending".into()));
        }
        Ok(GammaGrid(values))
    }

    /// `start_db, start_db + step_db, ...` up to and including `stop_db`.
    pub fn from_db(start_db: f64, stop_db: f64, step_db: f64) -> Result<Self> {
        if !(step_db > 0.0) || stop_db < start_db {
            return Err(Error::InvalidParameter(format!(
                "bad dB range {start_db}..{stop_db} step {step_db}"
            )));
        }
        let n = ((stop_db - start_db) / step_db + 1e-9).floor() as usize + 1;
        GammaGrid::new((0..n).map(|i| db_to_linear(start_db + i as f64 * step_db)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for GammaGrid {
    /// 4 to 13 dB in 0.25 dB steps.
    fn default() -> Self {
        GammaGrid::from_db(4.0, 13.0, 0.25).expect("static grid")
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// `Pr(PMEPR > gamma)` sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CcdfCurve {
    pub gamma: Vec<f64>,
    pub ccdf: Vec<f64>,
    pub sample_count: usize,
}

impl CcdfCurve {
    /// Fraction of `values` strictly above each grid point.
    pub fn from_values(values: &[f64], grid: &GammaGrid) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("no samples for CCDF".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let ccdf = grid
            .values()
            .iter()
            .map(|&g| {
                let at_or_below = sorted.partition_point(|&v| v <= g);
                (n - at_or_below) as f64 / n as f64
            })
            .collect();
        Ok(CcdfCurve {
            gamma: grid.values().to_vec(),
            ccdf,
            sample_count: n,
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "gamma_db,gamma_linear,ccdf,n_samples")?;
        for (g, p) in self.gamma.iter().zip(&self.ccdf) {
            writeln!(out, "{},{},{},{}", linear_to_db(*g), g, p, self.sample_count)?;
        }
        Ok(())
    }
}

pub fn empirical_ccdf(
    codebook: &Codebook,
    unitaries: Option<&UnitarySet>,
    grid: &GammaGrid,
    j: usize,
) -> Result<CcdfCurve> {
    if codebook.is_empty() {
        return Err(Error::InvalidParameter("empty codebook".into()));
    }
    CcdfCurve::from_values(&pmepr_values(codebook, unitaries, j)?, grid)
}

/// Empirical quantile (nearest-rank, `q` in `[0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}
