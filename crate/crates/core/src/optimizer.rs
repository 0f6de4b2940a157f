//! Gradient descent over one unitary precoder per codebook subset.
//!
//! Each iteration moves `W_n` against the gradient of the quartic statistic
//! `R({W_n C_n})` and projects the result back onto the unitary group. The
//! batch update uses the whole subset; the stochastic update uses a single
//! codeword drawn uniformly from the subset.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{quartic_scale, r_statistic};
use crate::codebook::{Codebook, Codeword};
use crate::container;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::spectral::SpectralBasis;
use crate::Complex64;

/// Tolerance on `||W W* - I||_F` accepted when loading or validating.
pub const UNITARY_TOL: f64 = 1e-8;

/// The optimizer state: `N` unitary `K x K` matrices and the iteration count.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitarySet {
    matrices: Vec<CMatrix>,
    iteration: usize,
}

impl UnitarySet {
    pub fn identity(k: usize, n: usize) -> Self {
        UnitarySet {
            matrices: vec![linalg::identity(k); n],
            iteration: 0,
        }
    }

    /// Wraps matrices after checking that each is square and unitary.
    pub fn new(matrices: Vec<CMatrix>, iteration: usize) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::InvalidParameter("a unitary set needs at least one matrix".into()))?;
        let k = first.nrows();
        for w in &matrices {
            linalg::check_square(w, k)?;
            let err = linalg::unitarity_error(w);
            if err > UNITARY_TOL {
                return Err(Error::NotUnitary(err));
            }
        }
        Ok(UnitarySet { matrices, iteration })
    }

    pub fn carriers(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn matrix(&self, n: usize) -> &CMatrix {
        &self.matrices[n]
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    /// Worst unitarity deviation over the set.
    pub fn max_unitarity_error(&self) -> f64 {
        self.matrices.iter().map(linalg::unitarity_error).fold(0.0, f64::max)
    }

    /// `max_n ||W_n - other_n||_F`.
    pub fn max_distance(&self, other: &UnitarySet) -> f64 {
        self.matrices
            .iter()
            .zip(&other.matrices)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn check_compatible(&self, codebook: &Codebook) -> Result<()> {
        if self.len() != codebook.n_subsets() {
            return Err(Error::DimensionMismatch {
                expected: codebook.n_subsets(),
                found: self.len(),
            });
        }
        if self.carriers() != codebook.carriers() {
            return Err(Error::DimensionMismatch {
                expected: codebook.carriers(),
                found: self.carriers(),
            });
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, out: W, seed: u64, config_hash: &str) -> Result<()> {
        let header = UnitaryHeader {
            format: UNITARY_FORMAT.into(),
            version: 1,
            k: self.carriers(),
            n: self.len(),
            iteration: self.iteration,
            seed,
            config_hash: config_hash.to_owned(),
        };
        // row-major per matrix
        let payload: Vec<Complex64> = self
            .matrices
            .iter()
            .flat_map(|w| (0..w.nrows()).flat_map(move |i| (0..w.ncols()).map(move |j| w[(i, j)])))
            .collect();
        container::write(out, UNITARY_MAGIC, &header, &payload)
    }

    /// Reads a persisted set and re-validates unitarity.
    pub fn read_from<R: Read>(input: R) -> Result<(UnitarySet, UnitaryHeader)> {
        let (header, payload): (UnitaryHeader, _) = container::read(input, UNITARY_MAGIC)?;
        if header.format != UNITARY_FORMAT || header.version != 1 {
            return Err(Error::Format(format!(
                "unsupported unitary format {} v{}",
                header.format, header.version
            )));
        }
        let k = header.k;
        if k == 0 || header.n == 0 || payload.len() != header.n * k * k {
            return Err(Error::Format(format!(
                "payload holds {} values, header promises {} matrices of {k} x {k}",
                payload.len(),
                header.n
            )));
        }
        let matrices = payload
            .chunks_exact(k * k)
            .map(|chunk| CMatrix::from_row_slice(k, k, chunk))
            .collect();
        let set = UnitarySet::new(matrices, header.iteration)?;
        Ok((set, header))
    }

    pub fn save(&self, path: impl AsRef<Path>, seed: u64, config_hash: &str) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?), seed, config_hash)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(UnitarySet, UnitaryHeader)> {
        UnitarySet::read_from(BufReader::new(File::open(path)?))
    }
}

const UNITARY_MAGIC: &[u8; 8] = b"PAPRUNI\0";
const UNITARY_FORMAT: &str = "papr-unitaries";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitaryHeader {
    pub format: String,
    pub version: u32,
    pub k: usize,
    pub n: usize,
    pub iteration: usize,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    GramSchmidt,
    SymmetricDecorrelation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    Batch,
    Stochastic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    /// Stop once every `||W^(l+1) - W^(l)||_F` falls to this level.
    pub stop_tol: f64,
    pub projection: Projection,
    pub mode: UpdateMode,
    pub seed: u64,
    /// Iterations between recorded `R` values in the trace.
    pub checkpoint_every: usize,
}

impl OptimizerConfig {
    /// Defaults for `K` carriers: step `K^(-3/2)`, symmetric decorrelation,
    /// stochastic updates.
    pub fn for_carriers(k: usize) -> Self {
        OptimizerConfig {
            epsilon: (k as f64).powf(-1.5),
            max_iters: 20_000,
            stop_tol: 1e-6,
            projection: Projection::SymmetricDecorrelation,
            mode: UpdateMode::Stochastic,
            seed: 0,
            checkpoint_every: 500,
        }
    }

    /// The step `K_ref^(-3/2)` carried over to `K` carriers so that a single
    /// update moves `W` by the same fraction of its norm as at `K_ref`.
    ///
    /// With unit-energy symbols `||Delta W||_F` grows like `K` while
    /// `||W||_F = sqrt(K)`, so the relative step is about `epsilon sqrt(K)`.
    /// `K^(-3/2)` keeps that near `1/K`, which is small at 128 carriers but
    /// too coarse for desk-sized `K`.
    pub fn matched_step(k: usize, reference_k: usize) -> f64 {
        (reference_k as f64).powf(-1.5) * (reference_k as f64 / k as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be nonnegative, got {}",
                self.epsilon
            )));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::InvalidParameter("stop_tol must be nonnegative".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::InvalidParameter("checkpoint_every must be positive".into()));
        }
        Ok(())
    }
}

/// `sum_c sum_k [(c*W*C_kWc) C_k + (c*W*C^_kWc) C^_k] W c c*`.
///
/// Each term is evaluated as `(V*(|alpha|^2 alpha) + V^*(|beta|^2 beta)) c*`
/// with `alpha = V W c`, `beta = V^ W c`.
pub fn delta_w<'a, I>(subset: I, w: &CMatrix, basis: &SpectralBasis) -> Result<CMatrix>
where
    I: IntoIterator<Item = &'a Codeword>,
{
    let k = basis.carriers();
    linalg::check_square(w, k)?;
    let mut acc = CMatrix::zeros(k, k);
    for c in subset {
        if c.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: c.len(),
            });
        }
        let s = c.symbols();
        let u = basis.quartic_direction(&linalg::matvec(w, s))?;
        for j in 0..k {
            let cj = s[j].conj();
            for i in 0..k {
                acc[(i, j)] += u[i] * cj;
            }
        }
    }
    Ok(acc)
}

/// Classical Gram-Schmidt on the rows, in index order. Row `k` has its
/// components along rows `0..k` removed, then is normalised.
pub fn project_gram_schmidt(w: &CMatrix) -> Result<CMatrix> {
    let (k, cols) = w.shape();
    if k != cols {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: cols,
        });
    }
    let mut out = w.clone();
    for row in 0..k {
        let original: Vec<Complex64> = out.row(row).iter().copied().collect();
        let original_norm = original.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut v = original.clone();
        for prev in 0..row {
            // <w_prev, w_row> with the conjugate on the earlier row
            let coeff: Complex64 = (0..k).map(|j| out[(prev, j)].conj() * original[j]).sum();
            for j in 0..k {
                v[j] -= coeff * out[(prev, j)];
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 1e-12 * original_norm.max(1.0)) {
            return Err(Error::RankDeficient { row, residual: norm });
        }
        for j in 0..k {
            out[(row, j)] = v[j] / norm;
        }
    }
    Ok(out)
}

/// `(W W*)^(-1/2) W` through the eigendecomposition `W W* = F L F*`.
pub fn project_symmetric(w: &CMatrix) -> Result<CMatrix> {
    let (k, cols) = w.shape();
    if k != cols {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: cols,
        });
    }
    let gram = w * w.adjoint();
    let gram = (&gram + gram.adjoint()).scale(0.5);
    let eig = gram.symmetric_eigen();
    let smallest = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smallest > 1e-12) {
        return Err(Error::NearSingular(smallest));
    }
    let f = &eig.eigenvectors;
    let mut scaled = f.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let s = l.sqrt().recip();
        scaled.column_mut(j).iter_mut().for_each(|z| *z *= s);
    }
    Ok(scaled * f.adjoint() * w)
}

/// Largest relative deviation between `delta_w` over the whole codebook
/// (scaled by `2K(2K-1)/|C|`) and central differences of `R` in the real
/// and imaginary parts of each entry of `w`. All codewords share `w`.
pub fn gradient_check(codebook: &Codebook, basis: &SpectralBasis, w: &CMatrix) -> Result<f64> {
    let k = codebook.carriers();
    let shared = |m: &CMatrix| UnitarySet {
        matrices: vec![m.clone(); codebook.n_subsets()],
        iteration: 0,
    };
    let r_at = |m: &CMatrix| r_statistic(codebook, basis, Some(&shared(m)));
    let scale = 4.0 * quartic_scale(k) / codebook.len() as f64;
    let analytic = delta_w(codebook.codewords(), w, basis)?.scale(scale);
    let h = 1e-5;
    let floor = analytic.norm() * 1e-3;
    let mut worst: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let mut fd = [0.0; 2];
            for (part, unit) in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]
                .into_iter()
                .enumerate()
            {
                let mut up = w.clone();
                up[(i, j)] += unit * h;
                let mut down = w.clone();
                down[(i, j)] -= unit * h;
                fd[part] = (r_at(&up)? - r_at(&down)?) / (2.0 * h);
            }
            let fd = Complex64::new(fd[0], fd[1]);
            let an = analytic[(i, j)];
            worst = worst.max((fd - an).norm() / an.norm().max(floor));
        }
    }
    Ok(worst)
}

fn project(w: &CMatrix, projection: Projection) -> Result<CMatrix> {
    match projection {
        Projection::GramSchmidt => project_gram_schmidt(w),
        Projection::SymmetricDecorrelation => project_symmetric(w),
    }
}

fn descend(w: &CMatrix, delta: &CMatrix, config: &OptimizerConfig) -> Result<CMatrix> {
    if config.epsilon == 0.0 {
        return Ok(w.clone());
    }
    project(&(w - delta.scale(config.epsilon)), config.projection)
}

fn check_state(state: &UnitarySet, codebook: &Codebook, basis: &SpectralBasis) -> Result<()> {
    state.check_compatible(codebook)?;
    if basis.carriers() != codebook.carriers() {
        return Err(Error::DimensionMismatch {
            expected: codebook.carriers(),
            found: basis.carriers(),
        });
    }
    Ok(())
}

/// One full-gradient iteration over every subset.
pub fn step_batch(
    state: &UnitarySet,
    codebook: &Codebook,
    basis: &SpectralBasis,
    config: &OptimizerConfig,
) -> Result<UnitarySet> {
    check_state(state, codebook, basis)?;
    let matrices = (0..state.len())
        .into_par_iter()
        .map(|n| {
            let w = state.matrix(n);
            let delta = delta_w(codebook.subset(n)?, w, basis)?;
            descend(w, &delta, config)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UnitarySet {
        matrices,
        iteration: state.iteration + 1,
    })
}

/// Index drawn for subset `n` at iteration `iteration`. Each subset owns an
/// independent ChaCha stream, positioned by the iteration count, so draws
/// do not depend on scheduling and resume cleanly from a saved state.
pub fn stochastic_draw(seed: u64, n: usize, iteration: usize, subset_len: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    rng.set_word_pos((iteration as u128) << 8);
    rng.gen_range(0..subset_len)
}

/// One iteration using a single uniformly drawn codeword per subset.
pub fn step_stochastic(
    state: &UnitarySet,
    codebook: &Codebook,
    basis: &SpectralBasis,
    config: &OptimizerConfig,
) -> Result<UnitarySet> {
    check_state(state, codebook, basis)?;
    let matrices = (0..state.len())
        .into_par_iter()
        .map(|n| {
            let members = &codebook.partition()[n];
            let pick = stochastic_draw(config.seed, n, state.iteration, members.len());
            let c = &codebook.codewords()[members[pick]];
            let w = state.matrix(n);
            let delta = delta_w(std::iter::once(c), w, basis)?;
            descend(w, &delta, config)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UnitarySet {
        matrices,
        iteration: state.iteration + 1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub r_value: f64,
    /// Largest `||W^(l) - W^(l-1)||_F` of the step that reached this point.
    pub max_change: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizerRun {
    pub unitaries: UnitarySet,
    pub trace: Vec<TracePoint>,
    pub converged: bool,
}

/// Runs from identity matrices.
pub fn run(codebook: &Codebook, basis: &SpectralBasis, config: &OptimizerConfig) -> Result<OptimizerRun> {
    let start = UnitarySet::identity(codebook.carriers(), codebook.n_subsets());
    run_from(start, codebook, basis, config)
}

/// Iterates until every matrix moves by at most `stop_tol` in one step, or
/// until `max_iters` further iterations have run.
pub fn run_from(
    initial: UnitarySet,
    codebook: &Codebook,
    basis: &SpectralBasis,
    config: &OptimizerConfig,
) -> Result<OptimizerRun> {
    config.validate()?;
    check_state(&initial, codebook, basis)?;
    let clock = Instant::now();
    let elapsed = |clock: &Instant| clock.elapsed().as_secs_f64() * 1e3;
    let mut trace = vec![TracePoint {
        iteration: initial.iteration(),
        r_value: r_statistic(codebook, basis, Some(&initial))?,
        max_change: f64::NAN,
        wall_ms: elapsed(&clock),
    }];
    let mut state = initial;
    let mut converged = false;
    for done in 1..=config.max_iters {
        let next = match config.mode {
            UpdateMode::Batch => step_batch(&state, codebook, basis, config),
            UpdateMode::Stochastic => step_stochastic(&state, codebook, basis, config),
        }
        .map_err(|e| Error::Optimizer {
            iteration: state.iteration(),
            source: Box::new(e),
        })?;
        let change = next.max_distance(&state);
        state = next;
        converged = change <= config.stop_tol;
        if converged || done == config.max_iters || done % config.checkpoint_every == 0 {
            trace.push(TracePoint {
                iteration: state.iteration(),
                r_value: r_statistic(codebook, basis, Some(&state))?,
                max_change: change,
                wall_ms: elapsed(&clock),
            });
        }
        if converged {
            break;
        }
    }
    Ok(OptimizerRun {
        unitaries: state,
        trace,
        converged,
    })
}
