//! Physical-layer harness: precoding, Rapp power amplifier, AWGN on the
//! time-domain samples, demodulation, inverse precoding and Gray demapping.
//!
//! Codeword `c` of subset `i` is sent as `W_i c` together with the side
//! index `i`. The receiver forms `W_i* y` and slices each symbol to the
//! nearest constellation point.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, Codeword, QamConstellation};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::optimizer::UnitarySet;
use crate::signal::{db_to_linear, Oversampler};
use crate::Complex64;

/// Which Rapp amplitude characteristic to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RappShape {
    /// `rho / (1 + (rho/r)^(2p))^(1/(2p))`, saturating at `r`.
    #[default]
    Standard,
    /// `rho / (1 + (rho/r)^p)^(1/(2p))`. Grows like `sqrt(r rho)` and never
    /// saturates.
    AsTypeset,
}

/// Memoryless amplifier with AM/AM curve `g(rho)` and no AM/PM distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RappModel {
    pub p: f64,
    pub r_clip: f64,
    #[serde(default)]
    pub shape: RappShape,
}

impl RappModel {
    pub fn new(p: f64, r_clip: f64) -> Result<Self> {
        Self::with_shape(p, r_clip, RappShape::Standard)
    }

    pub fn with_shape(p: f64, r_clip: f64, shape: RappShape) -> Result<Self> {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Rapp smoothness p must be positive, got {p}"
            )));
        }
        if !(r_clip > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "clipping level must be positive, got {r_clip}"
            )));
        }
        Ok(RappModel { p, r_clip, shape })
    }

    /// Clipping amplitude `backoff_db` above the RMS amplitude `sqrt(P_av)`.
    pub fn from_backoff(p: f64, p_av: f64, backoff_db: f64) -> Result<Self> {
        if !(p_av > 0.0) {
            return Err(Error::InvalidParameter(format!("P_av must be positive, got {p_av}")));
        }
        Self::new(p, p_av.sqrt() * 10f64.powf(backoff_db / 20.0))
    }

    /// Output amplitude for input amplitude `rho`.
    pub fn gain(&self, rho: f64) -> f64 {
        let x = rho / self.r_clip;
        let denom = match self.shape {
            RappShape::Standard => (1.0 + x.powf(2.0 * self.p)).powf(1.0 / (2.0 * self.p)),
            RappShape::AsTypeset => (1.0 + x.powf(self.p)).powf(1.0 / (2.0 * self.p)),
        };
        rho / denom
    }
}

/// Amplitudes mapped through the Rapp curve, phases kept.
pub fn rapp_apply(samples: &[Complex64], model: &RappModel) -> Vec<Complex64> {
    samples
        .iter()
        .map(|&z| {
            let rho = z.norm();
            if rho == 0.0 {
                z
            } else {
                z * (model.gain(rho) / rho)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub ebn0_db: Vec<f64>,
    /// Oversampling of the transmitted waveform.
    pub oversampling: usize,
    pub amplifier: Option<RappModel>,
    pub seed: u64,
    /// Stop a grid point after this many bit errors.
    pub target_errors: u64,
    /// Stop a grid point after this many bits even if errors are short.
    pub max_bits: u64,
}

impl LinkConfig {
    pub fn new(ebn0_db: Vec<f64>, seed: u64) -> Self {
        LinkConfig {
            ebn0_db,
            oversampling: 1,
            amplifier: None,
            seed,
            target_errors: 200,
            max_bits: 50_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ebn0_db.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("E_b/N_0 grid must be finite".into()));
        }
        if self.oversampling == 0 {
            return Err(Error::InvalidParameter("oversampling must be at least 1".into()));
        }
        if self.max_bits == 0 {
            return Err(Error::InvalidParameter("max_bits must be positive".into()));
        }
        Ok(())
    }
}

/// Per-sample complex noise standard deviation for a given `E_b/N_0`.
///
/// `E_b = P_av / (K log2 M)` and the demodulator scales by `1/(JK)`, so a
/// time-domain variance `sigma^2` lands as `sigma^2 / (JK)` per subcarrier.
pub fn noise_sigma(ebn0_db: f64, p_av: f64, k: usize, bits_per_symbol: usize, j: usize) -> f64 {
    let eb = p_av / (k * bits_per_symbol) as f64;
    let n0 = eb / db_to_linear(ebn0_db);
    (n0 * (j * k) as f64).sqrt()
}

/// Modulator and demodulator for one `(K, J)` pair.
#[derive(Clone)]
pub struct Transceiver {
    over: Oversampler,
    fft: Arc<dyn Fft<f64>>,
}

impl Transceiver {
    pub fn new(k: usize, j: usize) -> Result<Self> {
        let over = Oversampler::new(k, j)?;
        let fft = FftPlanner::new().plan_fft_forward(k * j);
        Ok(Transceiver { over, fft })
    }

    pub fn carriers(&self) -> usize {
        self.over.carriers()
    }

    /// Time samples of `W c` after the amplifier, plus noise of variance
    /// `sigma^2` per complex sample.
    pub fn transmit_samples<R: Rng + ?Sized>(
        &self,
        symbols: &[Complex64],
        w: &CMatrix,
        amplifier: Option<&RappModel>,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Vec<Complex64>> {
        linalg::check_square(w, self.carriers())?;
        let mut x = self.over.samples(&linalg::matvec(w, symbols))?;
        if let Some(amp) = amplifier {
            x = rapp_apply(&x, amp);
        }
        if sigma > 0.0 {
            let s = sigma / std::f64::consts::SQRT_2;
            for z in &mut x {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                *z += Complex64::new(re * s, im * s);
            }
        }
        Ok(x)
    }

    /// Subcarrier values `y_k = (1/JK) sum_i x_i exp(-2 pi j k i / JK)`.
    pub fn demodulate(&self, samples: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.fft.len();
        if samples.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: samples.len(),
            });
        }
        let mut buf = samples.to_vec();
        self.fft.process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.truncate(self.carriers());
        buf.iter_mut().for_each(|z| *z *= scale);
        Ok(buf)
    }
}

/// What reaches the receiver: the demodulated subcarriers and the index of
/// the precoder used.
#[derive(Debug, Clone, PartialEq)]
pub struct Received {
    pub y: Vec<Complex64>,
    pub side_index: usize,
}

pub fn transmit<R: Rng + ?Sized>(
    c: &Codeword,
    subset_index: usize,
    unitaries: &UnitarySet,
    link: &LinkConfig,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<Received> {
    if subset_index >= unitaries.len() {
        return Err(Error::IndexOutOfRange {
            index: subset_index,
            len: unitaries.len(),
        });
    }
    let trx = Transceiver::new(c.len(), link.oversampling)?;
    let x = trx.transmit_samples(
        c.symbols(),
        unitaries.matrix(subset_index),
        link.amplifier.as_ref(),
        noise_sigma,
        rng,
    )?;
    Ok(Received {
        y: trx.demodulate(&x)?,
        side_index: subset_index,
    })
}

/// `W_i* y` followed by nearest-point slicing; returns the constellation
/// indices.
pub fn detect(y: &[Complex64], w: &CMatrix, constellation: &QamConstellation) -> Result<Vec<usize>> {
    linalg::check_square(w, y.len())?;
    Ok(linalg::adjoint_matvec(w, y)
        .into_iter()
        .map(|z| constellation.nearest(z))
        .collect())
}

/// Gray bits of the detected symbols, in carrier order.
pub fn receive(
    y: &[Complex64],
    side_index: usize,
    unitaries: &UnitarySet,
    constellation: &QamConstellation,
) -> Result<Vec<u8>> {
    if side_index >= unitaries.len() {
        return Err(Error::IndexOutOfRange {
            index: side_index,
            len: unitaries.len(),
        });
    }
    let mut bits = Vec::with_capacity(y.len() * constellation.bits_per_symbol());
    for idx in detect(y, unitaries.matrix(side_index), constellation)? {
        constellation.push_bits(idx, &mut bits);
    }
    Ok(bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub ebn0_db: f64,
    pub ber: f64,
    pub n_bits: u64,
    pub n_errors: u64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// 95% Wilson score interval for `errors` out of `trials`.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = errors as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

const BLOCK_CODEWORDS: usize = 64;
const WAVE_BLOCKS: usize = 32;

/// Monte Carlo BER at every grid point. Codewords are drawn uniformly from
/// the codebook and sent through the precoder of their subset.
///
/// Work is split into blocks, each with its own ChaCha stream keyed by grid
/// point and block index. Blocks run in fixed-size parallel waves and the
/// stopping rule is checked between waves, so results do not depend on the
/// thread count.
pub fn ber_sweep(
    codebook: &Codebook,
    unitaries: &UnitarySet,
    constellation: &QamConstellation,
    link: &LinkConfig,
) -> Result<Vec<BerPoint>> {
    link.validate()?;
    unitaries.check_compatible(codebook)?;
    if codebook.is_empty() {
        return Err(Error::InvalidParameter("empty codebook".into()));
    }
    let k = codebook.carriers();
    let bps = constellation.bits_per_symbol();
    let owner = codebook.subset_of();
    let tx_bits: Vec<Vec<u8>> = codebook
        .codewords()
        .iter()
        .map(|c| {
            let mut bits = Vec::with_capacity(k * bps);
            for &s in c.symbols() {
                constellation.push_bits(constellation.nearest(s), &mut bits);
            }
            bits
        })
        .collect();
    let trx = Transceiver::new(k, link.oversampling)?;
    let bits_per_block = (BLOCK_CODEWORDS * k * bps) as u64;

    link.ebn0_db
        .iter()
        .enumerate()
        .map(|(point, &ebn0)| {
            let sigma = noise_sigma(ebn0, codebook.p_av(), k, bps, link.oversampling);
            let run_block = |block: u64| -> Result<u64> {
                let mut rng = ChaCha8Rng::seed_from_u64(link.seed);
                rng.set_stream(((point as u64) << 40) | block);
                let mut errors = 0u64;
                for _ in 0..BLOCK_CODEWORDS {
                    let pick = rng.gen_range(0..codebook.len());
                    let n = owner[pick];
                    let w = unitaries.matrix(n);
                    let x = trx.transmit_samples(
                        codebook.codewords()[pick].symbols(),
                        w,
                        link.amplifier.as_ref(),
                        sigma,
                        &mut rng,
                    )?;
                    let y = trx.demodulate(&x)?;
                    let sent = &tx_bits[pick];
                    let mut at = 0;
                    for idx in detect(&y, w, constellation)? {
                        let mut got = Vec::with_capacity(bps);
                        constellation.push_bits(idx, &mut got);
                        errors += got.iter().zip(&sent[at..at + bps]).filter(|(a, b)| a != b).count() as u64;
                        at += bps;
                    }
                }
                Ok(errors)
            };

            let (mut n_bits, mut n_errors, mut next_block) = (0u64, 0u64, 0u64);
            while n_errors < link.target_errors && n_bits < link.max_bits {
                let remaining = (link.max_bits - n_bits).div_ceil(bits_per_block);
                let wave = (WAVE_BLOCKS as u64).min(remaining);
                let errs = (next_block..next_block + wave)
                    .into_par_iter()
                    .map(run_block)
                    .collect::<Result<Vec<u64>>>()?;
                n_errors += errs.iter().sum::<u64>();
                n_bits += wave * bits_per_block;
                next_block += wave;
            }
            let (ci_low, ci_high) = wilson_interval(n_errors, n_bits);
            Ok(BerPoint {
                ebn0_db: ebn0,
                ber: n_errors as f64 / n_bits as f64,
                n_bits,
                n_errors,
                ci_low,
                ci_high,
            })
        })
        .collect()
}

pub fn write_ber_csv<W: Write>(points: &[BerPoint], mut out: W) -> Result<()> {
    writeln!(out, "ebn0_db,ber,n_bits,n_errors,ci_low,ci_high")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.ebn0_db, p.ber, p.n_bits, p.n_errors, p.ci_low, p.ci_high
        )?;
    }
    Ok(())
}
