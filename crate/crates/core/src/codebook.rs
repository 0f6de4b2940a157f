//! Codewords, square QAM constellations, and partitioned codebooks.
//!
//! A codeword is the vector of `K` symbols placed on the subcarriers of one
//! OFDM symbol. A codebook is a finite set of codewords, all equally likely,
//! split into `N` disjoint subsets that each get their own unitary precoder.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};

/// Length-`K` vector of complex subcarrier symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct Codeword(Vec<Complex64>);

impl Codeword {
    pub fn new(symbols: Vec<Complex64>) -> Result<Self> {
        if symbols.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a codeword needs at least 2 carriers, got {}",
                symbols.len()
            )));
        }
        if let Some(i) = symbols.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "symbol {i} is not finite: {}",
                symbols[i]
            )));
        }
        Ok(Codeword(symbols))
    }

    /// Convenience constructor from real parts only.
    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_symbols(self) -> Vec<Complex64> {
        self.0
    }

    /// Squared l2 norm, `rho(0)`.
    pub fn power(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).sum()
    }

    /// The precoded codeword `W c`.
    pub fn transformed(&self, w: &CMatrix) -> Result<Codeword> {
        linalg::check_square(w, self.len())?;
        Ok(Codeword(linalg::matvec(w, &self.0)))
    }
}

/// Square M-QAM with points `D((2m1 - 1) + j(2m2 - 1))` and Gray labels per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct QamConstellation {
    order: usize,
    side: usize,
    scale: f64,
}

impl QamConstellation {
    /// Unit average energy: `D^2 = 3 / (2 (M - 1))`.
    pub fn new(order: usize) -> Result<Self> {
        let scale = (3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
        Self::with_scale(order, scale)
    }

    pub fn with_scale(order: usize, scale: f64) -> Result<Self> {
        let side = (order as f64).sqrt().round() as usize;
        if side * side != order || side < 2 || !side.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "QAM order {order} is not m^2 with m even and m > 1"
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "QAM scale must be positive, got {scale}"
            )));
        }
        Ok(QamConstellation { order, side, scale })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Points per axis, `sqrt(M)`.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    fn bits_per_axis(&self) -> usize {
        self.side.trailing_zeros() as usize
    }

    /// Amplitude of the `i`-th level on one axis, `i = 0..sqrt(M)`.
    fn level(&self, i: usize) -> f64 {
        self.scale * (2.0 * i as f64 - (self.side as f64 - 1.0))
    }

    /// Point with in-phase level `index / sqrt(M)` and quadrature level
    /// `index % sqrt(M)`.
    pub fn point(&self, index: usize) -> Complex64 {
        Complex64::new(self.level(index / self.side), self.level(index % self.side))
    }

    pub fn points(&self) -> Vec<Complex64> {
        (0..self.order).map(|i| self.point(i)).collect()
    }

    /// Half the minimum distance between points.
    pub fn half_spacing(&self) -> f64 {
        self.scale
    }

    fn nearest_level(&self, x: f64) -> usize {
        let pos = (x / self.scale + (self.side as f64 - 1.0)) / 2.0;
        pos.round().clamp(0.0, (self.side - 1) as f64) as usize
    }

    /// Minimum-distance decision. Per-axis rounding is exact for square QAM.
    pub fn nearest(&self, z: Complex64) -> usize {
        self.nearest_level(z.re) * self.side + self.nearest_level(z.im)
    }

    /// Gray label of a point, most significant bit first: in-phase bits
    /// followed by quadrature bits.
    pub fn bits(&self, index: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.bits_per_symbol());
        self.push_bits(index, &mut out);
        out
    }

    pub(crate) fn push_bits(&self, index: usize, out: &mut Vec<u8>) {
        let per_axis = self.bits_per_axis();
        for axis in [index / self.side, index % self.side] {
            let gray = axis ^ (axis >> 1);
            for b in (0..per_axis).rev() {
                out.push(((gray >> b) & 1) as u8);
            }
        }
    }

    /// Largest point magnitude squared, `2 D^2 (sqrt(M) - 1)^2`.
    pub fn peak_energy(&self) -> f64 {
        2.0 * self.scale * self.scale * ((self.side - 1) as f64).powi(2)
    }

    pub fn mean_energy(&self) -> f64 {
        self.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / self.order as f64
    }
}

/// Provenance recorded for generated codebooks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodebookOrigin {
    pub seed: u64,
    pub order: usize,
    pub scale: f64,
}

/// Equiprobable codewords plus a partition into `N` disjoint subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    codewords: Vec<Codeword>,
    partition: Vec<Vec<usize>>,
    p_av: f64,
    origin: Option<CodebookOrigin>,
}

impl Codebook {
    /// Builds a codebook with the consecutive-block partition.
    pub fn from_codewords(codewords: Vec<Codeword>, n_subsets: usize) -> Result<Self> {
        let count = codewords.len();
        if n_subsets == 0 || !count.is_multiple_of(n_subsets) {
            return Err(Error::InvalidParameter(format!(
                "{count} codewords cannot be split into {n_subsets} equal subsets"
            )));
        }
        Self::with_partition(codewords, consecutive_partition(count, n_subsets))
    }

    pub fn with_partition(codewords: Vec<Codeword>, partition: Vec<Vec<usize>>) -> Result<Self> {
        let count = codewords.len();
        if count == 0 {
            return Err(Error::InvalidParameter("empty codebook".into()));
        }
        let k = codewords[0].len();
        if let Some(bad) = codewords.iter().find(|c| c.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: bad.len(),
            });
        }
        let mut seen = vec![false; count];
        for subset in &partition {
            if subset.is_empty() {
                return Err(Error::InvalidParameter("partition has an empty subset".into()));
            }
            for &i in subset {
                if i >= count {
                    return Err(Error::IndexOutOfRange { index: i, len: count });
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidParameter(format!(
                        "codeword {i} appears in more than one subset"
                    )));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParameter(format!(
                "codeword {i} is not covered by the partition"
            )));
        }
        let p_av = codewords.iter().map(Codeword::power).sum::<f64>() / count as f64;
        if !(p_av > 0.0) {
            return Err(Error::InvalidParameter("average power must be positive".into()));
        }
        Ok(Codebook {
            codewords,
            partition,
            p_av,
            origin: None,
        })
    }

    pub fn carriers(&self) -> usize {
        self.codewords[0].len()
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn n_subsets(&self) -> usize {
        self.partition.len()
    }

    pub fn codewords(&self) -> &[Codeword] {
        &self.codewords
    }

    pub fn partition(&self) -> &[Vec<usize>] {
        &self.partition
    }

    pub fn origin(&self) -> Option<CodebookOrigin> {
        self.origin
    }

    /// Mean codeword power `P_av`.
    pub fn p_av(&self) -> f64 {
        self.p_av
    }

    /// Codewords of subset `n` (0-based).
    pub fn subset(&self, n: usize) -> Result<impl Iterator<Item = &Codeword> + Clone + '_> {
        let idx = self.partition.get(n).ok_or(Error::IndexOutOfRange {
            index: n,
            len: self.partition.len(),
        })?;
        Ok(idx.iter().map(move |&i| &self.codewords[i]))
    }

    pub fn subset_len(&self, n: usize) -> Result<usize> {
        self.partition.get(n).map(Vec::len).ok_or(Error::IndexOutOfRange {
            index: n,
            len: self.partition.len(),
        })
    }

    /// Subset index owning each codeword.
    pub fn subset_of(&self) -> Vec<usize> {
        let mut owner = vec![0; self.len()];
        for (n, subset) in self.partition.iter().enumerate() {
            for &i in subset {
                owner[i] = n;
            }
        }
        owner
    }

    /// Same codewords, new consecutive partition.
    pub fn repartitioned(&self, n_subsets: usize) -> Result<Codebook> {
        let mut book = Codebook::from_codewords(self.codewords.clone(), n_subsets)?;
        book.origin = self.origin;
        Ok(book)
    }

    pub fn min_power(&self) -> f64 {
        self.codewords.iter().map(Codeword::power).fold(f64::INFINITY, f64::min)
    }

    pub fn max_power(&self) -> f64 {
        self.codewords.iter().map(Codeword::power).fold(0.0, f64::max)
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let consecutive = self.partition == consecutive_partition(self.len(), self.n_subsets());
        let header = CodebookHeader {
            format: CODEBOOK_FORMAT.into(),
            version: FORMAT_VERSION,
            k: self.carriers(),
            count: self.len(),
            n_subsets: self.n_subsets(),
            seed: self.origin.map(|o| o.seed),
            constellation_order: self.origin.map(|o| o.order),
            scale: self.origin.map(|o| o.scale),
            partition: (!consecutive).then(|| self.partition.clone()),
        };
        let payload: Vec<Complex64> = self
            .codewords
            .iter()
            .flat_map(|c| c.symbols().iter().copied())
            .collect();
        container::write(out, CODEBOOK_MAGIC, &header, &payload)
    }

    pub fn read_from<R: Read>(input: R) -> Result<Codebook> {
        let (header, payload): (CodebookHeader, _) = container::read(input, CODEBOOK_MAGIC)?;
        if header.format != CODEBOOK_FORMAT || header.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported codebook format {} v{}",
                header.format, header.version
            )));
        }
        if header.k < 2 || payload.len() != header.k * header.count {
            return Err(Error::Format(format!(
                "payload holds {} symbols, header promises {} x {}",
                payload.len(),
                header.count,
                header.k
            )));
        }
        let codewords = payload
            .chunks_exact(header.k)
            .map(|chunk| Codeword::new(chunk.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let mut book = match header.partition {
            Some(p) => Codebook::with_partition(codewords, p)?,
            None => Codebook::from_codewords(codewords, header.n_subsets)?,
        };
        if book.n_subsets() != header.n_subsets {
            return Err(Error::Format("partition does not match n_subsets".into()));
        }
        book.origin = match (header.seed, header.constellation_order, header.scale) {
            (Some(seed), Some(order), Some(scale)) => Some(CodebookOrigin { seed, order, scale }),
            _ => None,
        };
        Ok(book)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Codebook> {
        Codebook::read_from(BufReader::new(File::open(path)?))
    }
}

const CODEBOOK_MAGIC: &[u8; 8] = b"PAPRCBK\0";
const CODEBOOK_FORMAT: &str = "papr-codebook";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodebookHeader {
    format: String,
    version: u32,
    k: usize,
    count: usize,
    n_subsets: usize,
    seed: Option<u64>,
    constellation_order: Option<usize>,
    scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    partition: Option<Vec<Vec<usize>>>,
}

fn consecutive_partition(count: usize, n_subsets: usize) -> Vec<Vec<usize>> {
    let size = count / n_subsets;
    (0..n_subsets).map(|n| (n * size..(n + 1) * size).collect()).collect()
}

/// Draws `count` codewords of `k` i.i.d. uniform constellation symbols from
/// a ChaCha20 stream seeded with `seed`, partitioned into consecutive blocks.
pub fn generate_codebook(
    constellation: &QamConstellation,
    k: usize,
    count: usize,
    n_subsets: usize,
    seed: u64,
) -> Result<Codebook> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("K must be at least 2, got {k}")));
    }
    if n_subsets == 0 || count == 0 || !count.is_multiple_of(n_subsets) {
        return Err(Error::InvalidParameter(format!(
            "count {count} is not divisible by n_subsets {n_subsets}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let order = constellation.order();
    let codewords = (0..count)
        .map(|_| {
            let symbols = (0..k).map(|_| constellation.point(rng.gen_range(0..order))).collect();
            Codeword::new(symbols)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut book = Codebook::from_codewords(codewords, n_subsets)?;
    book.origin = Some(CodebookOrigin {
        seed,
        order,
        scale: constellation.scale(),
    });
    Ok(book)
}

/// `g(C_n) = (1/|C_n|) sum c c*` for subset `n` (0-based).
pub fn subset_gram(codebook: &Codebook, n: usize) -> Result<CMatrix> {
    let k = codebook.carriers();
    let size = codebook.subset_len(n)?;
    let mut g = CMatrix::zeros(k, k);
    for c in codebook.subset(n)? {
        let s = c.symbols();
        for j in 0..k {
            let cj = s[j].conj();
            for i in 0..k {
                g[(i, j)] += s[i] * cj;
            }
        }
    }
    Ok(g.unscale(size as f64))
}
