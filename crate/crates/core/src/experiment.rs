//! Experiment orchestration behind the `papr` binary.
//!
//! A run lives in one output directory. Every subcommand reads its inputs
//! from there (or from explicit paths), writes plain CSV/JSON or the binary
//! containers, and records SHA-256 checksums of what it wrote in
//! `manifest.json`. Wall-clock data goes to `timestamps.json` and
//! `trace_timing.csv`, which are left out of the manifest so that reruns with
//! the same config and seed reproduce every other file byte for byte.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{self, BoundReport, HoeffdingRange};
use crate::channel::{self, LinkConfig, RappModel, RappShape};
use crate::codebook::{generate_codebook, Codebook, QamConstellation};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::optimizer::{self, OptimizerConfig, Projection, UnitarySet, UpdateMode};
use crate::signal::{self, GammaGrid};
use crate::spectral::build_basis;
use crate::Complex64;

pub const CONFIG_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";
pub const CODEBOOK_NAME: &str = "codebook.bin";
pub const UNITARIES_NAME: &str = "unitaries.bin";
const TIMESTAMPS_NAME: &str = "timestamps.json";

/// Inclusive dB grid `start, start + step, ..., stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbGrid {
    pub start_db: f64,
    pub stop_db: f64,
    pub step_db: f64,
}

impl DbGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step_db > 0.0
            && self.stop_db >= self.start_db
            && self.start_db.is_finite()
            && self.stop_db.is_finite())
        {
            return Err(Error::Config(format!("bad dB grid {self:?}")));
        }
        let n = ((self.stop_db - self.start_db) / self.step_db + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.start_db + i as f64 * self.step_db).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookSection {
    /// Number of subcarriers `K`.
    pub carriers: usize,
    /// QAM order `M`.
    pub order: usize,
    pub count: usize,
    pub subsets: usize,
    /// Overrides the unit-energy half spacing `D`.
    pub scale: Option<f64>,
}

impl Default for CodebookSection {
    fn default() -> Self {
        CodebookSection {
            carriers: 128,
            order: 16,
            count: 2000,
            subsets: 5,
            scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CcdfSection {
    pub oversampling: usize,
    pub gamma: DbGrid,
}

impl Default for CcdfSection {
    fn default() -> Self {
        CcdfSection {
            oversampling: signal::DEFAULT_CCDF_OVERSAMPLING,
            gamma: DbGrid {
                start_db: 4.0,
                stop_db: 13.0,
                step_db: 0.25,
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub hoeffding_range: HoeffdingRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    /// Defaults to `K^(-3/2)`.
    pub epsilon: Option<f64>,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub projection: Projection,
    pub mode: UpdateMode,
    pub checkpoint_every: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerConfig::for_carriers(1);
        OptimizerSection {
            epsilon: None,
            max_iters: d.max_iters,
            stop_tol: d.stop_tol,
            projection: d.projection,
            mode: d.mode,
            checkpoint_every: d.checkpoint_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplifierSection {
    pub p: f64,
    pub backoff_db: f64,
    #[serde(default)]
    pub shape: RappShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BerSection {
    pub oversampling: usize,
    pub ebn0: DbGrid,
    pub target_errors: u64,
    pub max_bits: u64,
    pub amplifier: Option<AmplifierSection>,
}

impl Default for BerSection {
    fn default() -> Self {
        BerSection {
            oversampling: 1,
            ebn0: DbGrid {
                start_db: 0.0,
                stop_db: 14.0,
                step_db: 2.0,
            },
            target_errors: 200,
            max_bits: 50_000_000,
            amplifier: Some(AmplifierSection {
                p: 2.0,
                backoff_db: 2.0,
                shape: RappShape::Standard,
            }),
        }
    }
}

/// Everything a run depends on besides its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub codebook: CodebookSection,
    #[serde(default)]
    pub ccdf: CcdfSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub ber: BerSection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("run")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            seed: 0,
            out_dir: default_out_dir(),
            codebook: CodebookSection::default(),
            ccdf: CcdfSection::default(),
            bounds: BoundsSection::default(),
            optimizer: OptimizerSection::default(),
            ber: BerSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.version != CONFIG_VERSION {
            return bad(format!(
                "unsupported config version {}, expected {CONFIG_VERSION}",
                self.version
            ));
        }
        let c = &self.codebook;
        if c.carriers < 2 {
            return bad("codebook.carriers must be at least 2".into());
        }
        if c.count == 0 || c.subsets == 0 || c.subsets > c.count {
            return bad(format!(
                "need 1 <= subsets <= count, got {} subsets of {}",
                c.subsets, c.count
            ));
        }
        QamConstellation::new(c.order).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(d) = c.scale {
            if !(d.is_finite() && d > 0.0) {
                return bad(format!("codebook.scale must be positive, got {d}"));
            }
        }
        if self.ccdf.oversampling == 0 || self.ber.oversampling == 0 {
            return bad("oversampling factors must be at least 1".into());
        }
        self.ccdf.gamma.points()?;
        self.ber.ebn0.points()?;
        self.optimizer_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if let Some(e) = self.optimizer.epsilon {
            if !(e > 0.0) {
                return bad(format!("optimizer.epsilon must be positive, got {e}"));
            }
        }
        if self.ber.max_bits == 0 {
            return bad("ber.max_bits must be positive".into());
        }
        if let Some(a) = &self.ber.amplifier {
            if !(a.p > 0.0 && a.backoff_db.is_finite()) {
                return bad(format!("bad amplifier {a:?}"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the config with `out_dir` cleared, so moving a run does not
    /// change its identity.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn constellation(&self) -> Result<QamConstellation> {
        match self.codebook.scale {
            Some(d) => QamConstellation::with_scale(self.codebook.order, d),
            None => QamConstellation::new(self.codebook.order),
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        let k = self.codebook.carriers;
        let o = &self.optimizer;
        OptimizerConfig {
            epsilon: o.epsilon.unwrap_or_else(|| OptimizerConfig::for_carriers(k).epsilon),
            max_iters: o.max_iters,
            stop_tol: o.stop_tol,
            projection: o.projection,
            mode: o.mode,
            seed: self.seed,
            checkpoint_every: o.checkpoint_every,
        }
    }

    pub fn gamma_grid(&self) -> Result<GammaGrid> {
        GammaGrid::new(
            self.ccdf
                .gamma
                .points()?
                .into_iter()
                .map(signal::db_to_linear)
                .collect(),
        )
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub stage: String,
    pub sha256: String,
    pub bytes: u64,
    pub config_hash: String,
}

/// Inventory of the files a run directory is expected to contain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub artifact_version: String,
    pub files: BTreeMap<String, FileEntry>,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            format: "papr-manifest".into(),
            artifact_version: env!("CARGO_PKG_VERSION").into(),
            files: BTreeMap::new(),
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = fs::read(path)?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read(dir.join(MANIFEST_NAME))?;
        Ok(serde_json::from_slice(&text)?)
    }

    fn load_or_default(dir: &Path) -> Result<Self> {
        if dir.join(MANIFEST_NAME).exists() {
            Self::load(dir)
        } else {
            Ok(Self::default())
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(dir.join(MANIFEST_NAME))?);
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }

    /// Adds or replaces entries for `files`, which are relative to `dir`.
    pub fn record(&mut self, dir: &Path, stage: &str, config_hash: &str, files: &[&str]) -> Result<()> {
        for &name in files {
            let (sha256, bytes) = sha256_file(&dir.join(name))?;
            self.files.insert(
                name.to_owned(),
                FileEntry {
                    stage: stage.into(),
                    sha256,
                    bytes,
                    config_hash: config_hash.into(),
                },
            );
        }
        Ok(())
    }

    /// Fails on the first missing or modified file.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for (name, entry) in &self.files {
            let path = dir.join(name);
            if !path.exists() {
                return Err(Error::Manifest(format!("{name} is missing")));
            }
            let (sha, bytes) = sha256_file(&path)?;
            if sha != entry.sha256 || bytes != entry.bytes {
                return Err(Error::Manifest(format!("{name} does not match its recorded checksum")));
            }
        }
        Ok(())
    }
}

fn finish_stage(cfg: &ExperimentConfig, stage: &str, files: &[&str], started: Instant) -> Result<()> {
    let dir = &cfg.out_dir;
    let mut manifest = RunManifest::load_or_default(dir)?;
    manifest.record(dir, stage, &cfg.hash(), files)?;
    manifest.save(dir)?;

    let stamps_path = dir.join(TIMESTAMPS_NAME);
    let mut stamps: BTreeMap<String, serde_json::Value> = match fs::read(&stamps_path) {
        Ok(b) => serde_json::from_slice(&b).unwrap_or_default(),
        Err(_) => BTreeMap::new(),
    };
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    stamps.insert(
        stage.into(),
        serde_json::json!({ "finished_unix_ms": now as u64, "elapsed_ms": started.elapsed().as_secs_f64() * 1e3 }),
    );
    fs::write(&stamps_path, serde_json::to_vec_pretty(&stamps)?)?;
    Ok(())
}

fn create_out_dir(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    f(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Loads a codebook and checks it against the config.
pub fn load_codebook(cfg: &ExperimentConfig, path: Option<&Path>) -> Result<Codebook> {
    let path = path.map(Path::to_path_buf).unwrap_or_else(|| cfg.path(CODEBOOK_NAME));
    let book = Codebook::load(&path).map_err(|e| match e {
        Error::Io(io) => Error::Format(format!("cannot read codebook {}: {io}", path.display())),
        other => other,
    })?;
    if book.carriers() != cfg.codebook.carriers || book.n_subsets() != cfg.codebook.subsets {
        return Err(Error::Config(format!(
            "codebook {} has K = {}, N = {} but the config says K = {}, N = {}",
            path.display(),
            book.carriers(),
            book.n_subsets(),
            cfg.codebook.carriers,
            cfg.codebook.subsets
        )));
    }
    Ok(book)
}

/// Loads a unitary set; any defect in the file is reported as a format error.
pub fn load_unitaries(path: &Path) -> Result<UnitarySet> {
    UnitarySet::load(path)
        .map(|(set, _)| set)
        .map_err(|e| Error::Format(format!("unitary file {}: {e}", path.display())))
}

fn tagged(base: &str, precoded: bool) -> String {
    if precoded {
        format!("{base}_precoded")
    } else {
        base.to_owned()
    }
}

/// `gen`: draws the codebook.
pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let started = Instant::now();
    create_out_dir(cfg)?;
    let c = &cfg.codebook;
    let book = generate_codebook(&cfg.constellation()?, c.carriers, c.count, c.subsets, cfg.seed)?;
    let path = cfg.path(CODEBOOK_NAME);
    book.save(&path)?;
    finish_stage(cfg, "gen", &[CODEBOOK_NAME], started)?;
    Ok(path)
}

/// `bounds`: Markov and Hoeffding columns plus the JSON summary.
pub fn cmd_bounds(cfg: &ExperimentConfig, unitaries: Option<&Path>) -> Result<BoundReport> {
    cfg.validate()?;
    let started = Instant::now();
    let book = load_codebook(cfg, None)?;
    let set = unitaries.map(load_unitaries).transpose()?;
    let basis = build_basis(book.carriers())?;
    let report = BoundReport::compute(
        &book,
        &basis,
        set.as_ref(),
        &cfg.gamma_grid()?,
        cfg.bounds.hoeffding_range,
    )?;
    let stem = tagged("bounds", set.is_some());
    let (csv, json) = (format!("{stem}.csv"), format!("{stem}.json"));
    write_file(&cfg.path(&csv), |o| report.write_csv(o))?;
    write_file(&cfg.path(&json), |o| report.write_sidecar(o))?;
    finish_stage(cfg, "bounds", &[&csv, &json], started)?;
    Ok(report)
}

/// `ccdf`: empirical PMEPR CCDF at the configured oversampling.
pub fn cmd_ccdf(cfg: &ExperimentConfig, unitaries: Option<&Path>) -> Result<signal::CcdfCurve> {
    cfg.validate()?;
    let started = Instant::now();
    let book = load_codebook(cfg, None)?;
    let set = unitaries.map(load_unitaries).transpose()?;
    let curve = signal::empirical_ccdf(&book, set.as_ref(), &cfg.gamma_grid()?, cfg.ccdf.oversampling)?;
    let name = format!("{}.csv", tagged("ccdf", set.is_some()));
    write_file(&cfg.path(&name), |o| curve.write_csv(o))?;
    finish_stage(cfg, "ccdf", &[&name], started)?;
    Ok(curve)
}

/// `optimize`: runs the unitary search, from identity or from `resume`.
pub fn cmd_optimize(cfg: &ExperimentConfig, resume: Option<&Path>) -> Result<optimizer::OptimizerRun> {
    cfg.validate()?;
    let started = Instant::now();
    let book = load_codebook(cfg, None)?;
    let basis = build_basis(book.carriers())?;
    let initial = match resume {
        Some(p) => {
            let set = load_unitaries(p)?;
            set.check_compatible(&book)?;
            set
        }
        None => UnitarySet::identity(book.carriers(), book.n_subsets()),
    };
    let run = optimizer::run_from(initial, &book, &basis, &cfg.optimizer_config())?;
    run.unitaries.save(cfg.path(UNITARIES_NAME), cfg.seed, &cfg.hash())?;
    write_file(&cfg.path("trace.csv"), |o| {
        writeln!(o, "iteration,r_value,max_change")?;
        for p in &run.trace {
            writeln!(o, "{},{},{}", p.iteration, p.r_value, p.max_change)?;
        }
        Ok(())
    })?;
    write_file(&cfg.path("trace_timing.csv"), |o| {
        writeln!(o, "iteration,wall_ms")?;
        for p in &run.trace {
            writeln!(o, "{},{}", p.iteration, p.wall_ms)?;
        }
        Ok(())
    })?;
    finish_stage(cfg, "optimize", &[UNITARIES_NAME, "trace.csv"], started)?;
    Ok(run)
}

/// `ber`: Monte Carlo BER over the configured `E_b/N_0` grid. Without a
/// unitary file every subset uses the identity.
pub fn cmd_ber(cfg: &ExperimentConfig, unitaries: Option<&Path>) -> Result<Vec<channel::BerPoint>> {
    cfg.validate()?;
    let started = Instant::now();
    let book = load_codebook(cfg, None)?;
    let set = unitaries.map(load_unitaries).transpose()?;
    let precoded = set.is_some();
    let set = set.unwrap_or_else(|| UnitarySet::identity(book.carriers(), book.n_subsets()));
    let b = &cfg.ber;
    let link = LinkConfig {
        ebn0_db: b.ebn0.points()?,
        oversampling: b.oversampling,
        amplifier: b
            .amplifier
            .as_ref()
            .map(|a| RappModel::from_backoff(a.p, book.p_av(), a.backoff_db).map(|m| RappModel { shape: a.shape, ..m }))
            .transpose()?,
        seed: cfg.seed,
        target_errors: b.target_errors,
        max_bits: b.max_bits,
    };
    let points = channel::ber_sweep(&book, &set, &cfg.constellation()?, &link)?;
    let name = format!("{}.csv", tagged("ber", precoded));
    write_file(&cfg.path(&name), |o| channel::write_ber_csv(&points, o))?;
    finish_stage(cfg, "ber", &[&name], started)?;
    Ok(points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Result of `verify`.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
    /// `None` when the output directory has no manifest yet.
    pub manifest: Option<std::result::Result<usize, String>>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed) && !matches!(self.manifest, Some(Err(_)))
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for c in &self.checks {
            writeln!(
                out,
                "{} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        match &self.manifest {
            None => writeln!(out, "SKIP manifest: none in output directory")?,
            Some(Ok(n)) => writeln!(out, "PASS manifest: {n} files match")?,
            Some(Err(e)) => writeln!(out, "FAIL manifest: {e}")?,
        }
        Ok(())
    }
}

fn random_unitary(k: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(k, k, |_, _| {
        Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    })
    .qr()
    .q()
}

fn check_spectral(seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in [2usize, 3, 8, 16] {
        // build_basis verifies both eigendecompositions against the dense B matrices
        let basis = build_basis(k)?;
        let x: Vec<Complex64> = (0..k)
            .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect();
        let norm: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        for t in [basis.alpha(&x)?, basis.beta(&x)?] {
            let e: f64 = t.iter().map(|z| z.norm_sqr()).sum();
            worst = worst.max((e - norm).abs() / norm);
        }
    }
    if worst > 1e-9 {
        return Err(Error::IdentityCheck(format!("Parseval deviation {worst:e}")));
    }
    Ok(format!("K in {{2, 3, 8, 16}}, Parseval deviation {worst:.1e}"))
}

fn check_envelope(seed: u64) -> Result<String> {
    let q = QamConstellation::new(16)?;
    let book = generate_codebook(&q, 16, 500, 1, seed)?;
    let basis = build_basis(16)?;
    let over = signal::Oversampler::new(16, 16)?;
    let scale = bounds::quartic_scale(16);
    for c in book.codewords() {
        let peak = over.peak_power(c.symbols())?;
        let rhs = scale * basis.quartic_sum_of(c.symbols())?;
        if peak * peak > rhs * (1.0 + 1e-12) {
            return Err(Error::IdentityCheck(format!(
                "peak^2 {peak}^2 exceeds quartic bound {rhs}"
            )));
        }
    }
    let r = bounds::r_statistic(&book, &basis, None)?;
    let grid = GammaGrid::from_db(0.0, 13.0, 0.5)?;
    let markov = bounds::markov_ccdf_bound(r, book.p_av(), &grid)?;
    let curve = signal::empirical_ccdf(&book, None, &grid, 16)?;
    if let Some(i) = (0..grid.len()).find(|&i| curve.ccdf[i] > markov[i]) {
        return Err(Error::IdentityCheck(format!(
            "empirical CCDF above Markov bound at grid point {i}"
        )));
    }
    Ok("500 codewords at K = 16: envelope and Markov bounds hold".into())
}

fn check_projections(seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let w = random_unitary(8, &mut rng);
        let pert = CMatrix::from_fn(8, 8, |_, _| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
            * Complex64::new(0.1, 0.0);
        let a = &w + pert;
        for p in [optimizer::project_gram_schmidt(&a)?, optimizer::project_symmetric(&a)?] {
            worst = worst.max(linalg::unitarity_error(&p));
        }
        for p in [optimizer::project_gram_schmidt(&w)?, optimizer::project_symmetric(&w)?] {
            worst = worst.max((p - &w).norm());
        }
    }
    if worst > 1e-10 {
        return Err(Error::IdentityCheck(format!("projection deviation {worst:e}")));
    }
    Ok(format!("unitarity and fixed points within {worst:.1e}"))
}

fn check_gradient(seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = QamConstellation::new(16)?;
    let book = generate_codebook(&q, 4, 6, 1, seed)?;
    let basis = build_basis(4)?;
    let w = random_unitary(4, &mut rng);
    let err = optimizer::gradient_check(&book, &basis, &w)?;
    if err > 1e-5 {
        return Err(Error::IdentityCheck(format!("gradient relative error {err:e}")));
    }
    Ok(format!("K = 4, relative error {err:.1e}"))
}

fn check_link(seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = QamConstellation::new(16)?;
    let book = generate_codebook(&q, 8, 8, 2, seed)?;
    let set = UnitarySet::new(vec![random_unitary(8, &mut rng), random_unitary(8, &mut rng)], 0)?;
    let link = LinkConfig::new(vec![], seed);
    let owner = book.subset_of();
    for (i, c) in book.codewords().iter().enumerate() {
        let rx = channel::transmit(c, owner[i], &set, &link, 0.0, &mut rng)?;
        let chat = linalg::adjoint_matvec(set.matrix(owner[i]), &rx.y);
        let err = chat
            .iter()
            .zip(c.symbols())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if err > 1e-10 {
            return Err(Error::IdentityCheck(format!("noiseless roundtrip error {err:e}")));
        }
    }
    Ok("noiseless roundtrip exact".into())
}

fn check_gaussian_moment(seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in [2usize, 3, 4] {
        let a = CMatrix::from_fn(k, k, |_, _| {
            Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        let b = CMatrix::from_fn(k, k, |_, _| {
            Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
        });
        let m = bounds::gaussian_quartic_moment(&(&a * a.adjoint()), &(&b * b.adjoint()))?;
        if m.exact > m.bound * (1.0 + 1e-12) {
            return Err(Error::IdentityCheck(format!(
                "exact moment {} above 3 Tr(G S)^2 = {}",
                m.exact, m.bound
            )));
        }
    }
    Ok("exact quartic moment below 3 Tr(G S)^2".into())
}

/// `verify`: a fast invariant suite, plus the manifest of the output
/// directory when there is one.
pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    cfg.validate()?;
    type Check = fn(u64) -> Result<String>;
    let suite: [(&'static str, Check); 6] = [
        ("spectral identities", check_spectral),
        ("envelope and Markov bounds", check_envelope),
        ("projections", check_projections),
        ("gradient", check_gradient),
        ("link roundtrip", check_link),
        ("gaussian quartic moment", check_gaussian_moment),
    ];
    let checks = suite
        .iter()
        .map(|&(name, f)| match f(cfg.seed) {
            Ok(detail) => CheckOutcome {
                name,
                passed: true,
                detail,
            },
            Err(e) => CheckOutcome {
                name,
                passed: false,
                detail: e.to_string(),
            },
        })
        .collect();
    let manifest = if cfg.out_dir.join(MANIFEST_NAME).exists() {
        let m = RunManifest::load(&cfg.out_dir)?;
        Some(m.verify(&cfg.out_dir).map(|_| m.files.len()).map_err(|e| e.to_string()))
    } else {
        None
    };
    Ok(VerifyReport { checks, manifest })
}
