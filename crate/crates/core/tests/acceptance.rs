//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use papr_core::bounds::{
    chernoff_exponent, codebook_endpoints, gaussian_quartic_moment, hoeffding_ccdf_bound, jensen_floor,
    markov_ccdf_bound, optimal_chernoff_parameter, qam_endpoints, quartic_scale, r_statistic, real_embedding,
    HoeffdingRange,
};
use papr_core::channel::{self, ber_sweep, LinkConfig};
use papr_core::optimizer::{self, delta_w, project_gram_schmidt, project_symmetric};
use papr_core::signal::{pmepr_values, quantile, CcdfCurve, GammaGrid};
use papr_core::spectral::aperiodic_corr;
use papr_core::{
    build_basis, generate_codebook, linalg, quartic_sum, subset_gram, CMatrix, Codebook, Codeword, Complex64,
    OptimizerConfig, Projection, QamConstellation, UnitarySet, UpdateMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn cn(rng: &mut impl Rng) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    cx(StandardNormal.sample(rng), StandardNormal.sample(rng)) * s
}

fn random_matrix(k: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(k, k, |_, _| cn(rng))
}

fn random_unitary(k: usize, rng: &mut impl Rng) -> CMatrix {
    random_matrix(k, rng).qr().q()
}

fn random_psd(k: usize, rng: &mut impl Rng) -> CMatrix {
    let a = random_matrix(k, rng);
    &a * a.adjoint()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed <= Duration::from_secs(limit_s), || {
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

// ---------------------------------------------------------------------------
// 1. decomposition identities

/// V and V^ written out entry by entry.
fn dft_pair(k: usize) -> (CMatrix, CMatrix) {
    let kf = k as f64;
    let tau = 2.0 * std::f64::consts::PI;
    let v = CMatrix::from_fn(k, k, |m, n| {
        Complex64::from_polar(1.0 / kf.sqrt(), -tau * (m * n) as f64 / kf)
    });
    let vh = CMatrix::from_fn(k, k, |m, n| {
        Complex64::from_polar(1.0 / kf.sqrt(), -tau * n as f64 * (m as f64 / kf + 1.0 / (2.0 * kf)))
    });
    (v, vh)
}

/// `B^(k)` written out as block matrices.
fn shift_matrix(k_total: usize, k: usize, sign: f64) -> CMatrix {
    let mut b = CMatrix::zeros(k_total, k_total);
    // upper-right block I_k (or -I_k), lower-left block I_{K-k}
    for i in 0..k {
        b[(i, k_total - k + i)] = cx(sign, 0.0);
    }
    for i in 0..k_total - k {
        b[(k + i, i)] = cx(1.0, 0.0);
    }
    b
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let tau = 2.0 * std::f64::consts::PI;
    let mut worst: f64 = 0.0;
    let mut track = |what: &str, got: f64, want: f64, scale: f64| -> Result<(), String> {
        let e = (got - want).abs() / scale.max(1e-300);
        worst = worst.max(e);
        ensure(e <= 1e-9, || format!("{what}: {got} vs {want}"))
    };
    for k in [2usize, 3, 8, 16, 32] {
        let kf = k as f64;
        let basis = build_basis(k).map_err(|e| e.to_string())?;
        let (v, vh) = dft_pair(k);
        let dv = (basis.v() - &v).norm().max((basis.v_hat() - &vh).norm());
        track(&format!("K={k} V matrices"), dv, 0.0, 1.0)?;

        for shift in 0..k {
            let d = CMatrix::from_diagonal(&nalgebra::DVector::from_fn(k, |n, _| {
                Complex64::from_polar(1.0, -tau * (shift * n) as f64 / kf)
            }));
            let dh = CMatrix::from_diagonal(&nalgebra::DVector::from_fn(k, |n, _| {
                Complex64::from_polar(1.0, -tau * shift as f64 * (n as f64 / kf + 1.0 / (2.0 * kf)))
            }));
            let b = shift_matrix(k, shift, 1.0);
            let bh = shift_matrix(k, shift, -1.0);
            let e1 = (v.adjoint() * d * &v - &b).norm();
            let e2 = (vh.adjoint() * dh * &vh - &bh).norm();
            track(&format!("K={k} B^({shift}) reconstruction"), e1.max(e2), 0.0, b.norm())?;
        }

        for n in 0..k {
            let c = basis.c_operator(n).map_err(|e| e.to_string())?;
            let ch = basis.c_hat_operator(n).map_err(|e| e.to_string())?;
            for (name, op) in [("C", &c), ("C^", &ch)] {
                track(&format!("K={k} Tr {name}_{n}"), op.trace().re, 1.0, 1.0)?;
                track(&format!("K={k} {name}_{n} idempotent"), (op * op - op).norm(), 0.0, 1.0)?;
                let eig = nalgebra::SymmetricEigen::new(op.clone()).eigenvalues;
                let rank = eig.iter().filter(|&&l| l.abs() > 1e-9).count();
                ensure(rank == 1, || format!("K={k} {name}_{n} has rank {rank}"))?;
            }
        }

        for _ in 0..5 {
            let sym: Vec<Complex64> = (0..k).map(|_| cn(&mut rng)).collect();
            let c = Codeword::new(sym.clone()).map_err(|e| e.to_string())?;
            let cv = nalgebra::DVector::from_vec(sym.clone());
            let power = c.power();

            // rho(k) + conj rho(K-k) = c* B c, with rho(K) = 0
            let mut rho: Vec<Complex64> = (0..k)
                .map(|s| (0..k - s).map(|l| sym[l] * sym[l + s].conj()).sum())
                .collect();
            let lib_rho = aperiodic_corr(&c);
            for s in 0..k {
                track(&format!("K={k} rho({s})"), (lib_rho[s] - rho[s]).norm(), 0.0, power)?;
            }
            rho.push(cx(0.0, 0.0));
            let mut periodic = 0.0;
            let mut odd = 0.0;
            for s in 0..k {
                let p = rho[s] + rho[k - s].conj();
                let o = rho[s] - rho[k - s].conj();
                let qp = (cv.adjoint() * shift_matrix(k, s, 1.0) * &cv)[(0, 0)];
                let qo = (cv.adjoint() * shift_matrix(k, s, -1.0) * &cv)[(0, 0)];
                track(&format!("K={k} periodic form {s}"), (qp - p).norm(), 0.0, power)?;
                track(&format!("K={k} odd form {s}"), (qo - o).norm(), 0.0, power)?;
                periodic += p.norm_sqr();
                odd += o.norm_sqr();
            }
            // (2K-1){|rho0|^2 + 2 sum |rho_k|^2} = (2K-1)/2 {sum |p|^2 + sum |o|^2}
            let lhs = (2.0 * kf - 1.0) * (rho[0].norm_sqr() + 2.0 * (1..k).map(|s| rho[s].norm_sqr()).sum::<f64>());
            let mid = (2.0 * kf - 1.0) / 2.0 * (periodic + odd);
            track(&format!("K={k} periodic/odd expansion"), mid, lhs, lhs)?;
            let quartic = quartic_scale(k) * basis.quartic_sum_of(&sym).map_err(|e| e.to_string())?;
            track(&format!("K={k} spectral form"), quartic, lhs, lhs)?;

            // Parseval over C_k and C^_k
            let mut sum_c = 0.0;
            let mut sum_ch = 0.0;
            for n in 0..k {
                sum_c += (cv.adjoint() * basis.c_operator(n).unwrap() * &cv)[(0, 0)].re;
                sum_ch += (cv.adjoint() * basis.c_hat_operator(n).unwrap() * &cv)[(0, 0)].re;
            }
            track(&format!("K={k} Parseval C"), sum_c, power, power)?;
            track(&format!("K={k} Parseval C^"), sum_ch, power, power)?;
        }
    }
    within(start.elapsed(), 10)?;
    Ok(format!(
        "K in {{2,3,8,16,32}}, worst relative deviation {worst:.1e}, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// 2. bound chain

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let k = 16;
    let q = QamConstellation::new(16).unwrap();
    let book = generate_codebook(&q, k, 5000, 1, 202).map_err(|e| e.to_string())?;
    let basis = build_basis(k).unwrap();
    let p_av = book.p_av();
    let values = pmepr_values(&book, None, 16).unwrap();
    let scale = quartic_scale(k) / (p_av * p_av);
    for (i, (c, v)) in book.codewords().iter().zip(&values).enumerate() {
        let rhs = scale * basis.quartic_sum_of(c.symbols()).unwrap();
        ensure(v * v <= rhs * (1.0 + 1e-12), || {
            format!("codeword {i}: PMEPR^2 {} > {rhs}", v * v)
        })?;
    }
    let r = r_statistic(&book, &basis, None).unwrap();
    let grid = GammaGrid::from_db(4.0, 13.0, 0.25).unwrap();
    let curve = CcdfCurve::from_values(&values, &grid).unwrap();
    let markov = markov_ccdf_bound(r, p_av, &grid).unwrap();
    for (i, (e, m)) in curve.ccdf.iter().zip(&markov).enumerate() {
        ensure(e <= m, || {
            format!("Markov below empirical CCDF at grid point {i}: {m} < {e}")
        })?;
    }

    let mut notes = Vec::new();
    let mut failure = None;
    for (label, (a, b)) in [("QAM", qam_endpoints(&q, k)), ("codebook", codebook_endpoints(&book))] {
        for range in [HoeffdingRange::Published, HoeffdingRange::Squared] {
            let h = hoeffding_ccdf_bound(r, a, b, p_av, &grid, range).unwrap();
            let bad: Vec<String> = (0..grid.len())
                .filter(|&i| h[i].valid && h[i].value < curve.ccdf[i])
                .map(|i| {
                    format!(
                        "{:.2} dB: bound {:.2e} < ccdf {:.4}",
                        10.0 * grid.values()[i].log10(),
                        h[i].value,
                        curve.ccdf[i]
                    )
                })
                .collect();
            let valid = h.iter().filter(|p| p.valid).count();
            notes.push(format!("{label}/{range:?} {valid} valid, {} violations", bad.len()));
            if range == HoeffdingRange::Published && !bad.is_empty() && failure.is_none() {
                failure = Some(format!(
                    "Hoeffding ({label} endpoints) below empirical CCDF at {}",
                    bad[0]
                ));
            }
        }
    }
    within(start.elapsed(), 30)?;
    match failure {
        Some(f) => Err(format!("{f} [{}]", notes.join("; "))),
        None => Ok(format!(
            "5000 codewords, envelope and Markov hold; {} ({:.1} s)",
            notes.join("; "),
            start.elapsed().as_secs_f64()
        )),
    }
}

// ---------------------------------------------------------------------------
// 3. Gaussian fourth moment

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_embed: f64 = 0.0;
    for i in 0..100 {
        let k = 1 + i % 5;
        let x = random_psd(k, &mut rng);
        let y = random_psd(k, &mut rng);
        let lhs = (real_embedding(&x) * real_embedding(&y)).trace();
        let rhs = 2.0 * (&x * &y).trace().re;
        worst_embed = worst_embed.max(rel(lhs, rhs));
    }
    ensure(worst_embed <= 1e-10, || {
        format!("embedding trace identity off by {worst_embed:e}")
    })?;

    let draws = 1_000_000usize;
    let mut zs = Vec::new();
    for k in [2usize, 3, 4] {
        let g = random_psd(k, &mut rng);
        let sigma = random_psd(k, &mut rng);
        let m = gaussian_quartic_moment(&g, &sigma).map_err(|e| e.to_string())?;
        ensure(m.exact <= m.bound * (1.0 + 1e-12), || {
            format!("K={k}: exact {} > bound {}", m.exact, m.bound)
        })?;
        let chol = sigma.clone().cholesky().ok_or("covariance not positive definite")?.l();
        let seed: u64 = rng.gen();
        let (sum, sum2) = (0..100u64)
            .into_par_iter()
            .map(|block| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(block);
                let mut acc = (0.0, 0.0);
                for _ in 0..draws / 100 {
                    let z = nalgebra::DVector::from_fn(k, |_, _| cn(&mut r));
                    let c = &chol * z;
                    let f = (c.adjoint() * &g * &c)[(0, 0)].re;
                    acc.0 += f * f;
                    acc.1 += f.powi(4);
                }
                acc
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let n = draws as f64;
        let mean = sum / n;
        let se = ((sum2 / n - mean * mean) / n).sqrt();
        let z = (mean - m.exact) / se;
        ensure(z.abs() <= 3.0, || {
            format!("K={k}: Monte Carlo {mean} vs exact {} ({z:.2} sigma)", m.exact)
        })?;
        zs.push(format!("K={k} {z:+.2}σ"));
    }
    within(start.elapsed(), 60)?;
    Ok(format!(
        "embedding identity {worst_embed:.1e}; Monte Carlo {}; exact <= 3Tr(GΣ)^2 ({:.1} s)",
        zs.join(", "),
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// 4. Chernoff optimum

/// Minimiser of a smooth unimodal function by bisection on the sign of the
/// symmetric difference `f(s + h) - f(s - h)`. A fixed, coarse `h` keeps the
/// difference well above rounding; for a quadratic it is exact.
fn minimise_1d(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let h = 1e-2 * (hi - lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid + h) > f(mid - h) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * hi.abs() {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_s: f64 = 0.0;
    let mut worst_v: f64 = 0.0;
    for i in 0..50 {
        let a: f64 = rng.gen_range(0.0..5.0);
        let b: f64 = a + rng.gen_range(0.5..20.0);
        let p_av: f64 = rng.gen_range(0.5..4.0);
        let r_value: f64 = rng.gen_range(0.0..50.0);
        // pick gamma so that P_av^2 gamma^2 - R lands on the scale of b^2 - a^2
        let margin = rng.gen_range(0.05..1.0) * (b * b - a * a);
        let gamma = ((r_value + margin) / (p_av * p_av)).sqrt();
        let w = HoeffdingRange::Published.width(a, b);
        let f = |s: f64| chernoff_exponent(s, r_value, w, p_av, gamma);
        let s_num = minimise_1d(f, 0.0, 1e3 * (1.0 + 8.0 * margin / w));
        let s_closed = optimal_chernoff_parameter(r_value, w, p_av, gamma);
        let grid = GammaGrid::new(vec![gamma]).unwrap();
        let closed = hoeffding_ccdf_bound(r_value, a, b, p_av, &grid, HoeffdingRange::Published).unwrap()[0];
        ensure(closed.valid, || format!("tuple {i} flagged invalid"))?;
        let es = rel(s_num, s_closed);
        let ev = rel(f(s_num).exp(), closed.value);
        worst_s = worst_s.max(es);
        worst_v = worst_v.max(ev);
        ensure(es <= 1e-8 && ev <= 1e-8, || {
            format!(
                "tuple {i}: s {s_num} vs {s_closed}, bound {} vs {}",
                f(s_num).exp(),
                closed.value
            )
        })?;
    }
    Ok(format!(
        "50 tuples, worst relative error s {worst_s:.1e}, bound {worst_v:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// 5. gradient

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let k = 4;
    let basis = build_basis(k).unwrap();
    let q = QamConstellation::new(16).unwrap();
    let mut worst: f64 = 0.0;
    for inst in 0..10 {
        let size = 1 + inst % 6;
        let book = generate_codebook(&q, k, size, 1, 5000 + inst as u64).unwrap();
        let w = random_unitary(k, &mut rng);
        let kf = k as f64;
        let r_at = |m: &CMatrix| {
            let total: f64 = book
                .codewords()
                .iter()
                .map(|c| quartic_sum(c, &basis, Some(m)).unwrap())
                .sum();
            kf * (2.0 * kf - 1.0) / 2.0 * total / size as f64
        };
        let h = 1e-5;
        let mut fd = CMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                let mut parts = [0.0; 2];
                for (p, unit) in [cx(1.0, 0.0), cx(0.0, 1.0)].into_iter().enumerate() {
                    let mut up = w.clone();
                    up[(i, j)] += unit * h;
                    let mut down = w.clone();
                    down[(i, j)] -= unit * h;
                    parts[p] = (r_at(&up) - r_at(&down)) / (2.0 * h);
                }
                fd[(i, j)] = cx(parts[0], parts[1]);
            }
        }
        let analytic =
            delta_w(book.codewords(), &w, &basis).unwrap() * cx(2.0 * kf * (2.0 * kf - 1.0) / size as f64, 0.0);
        let e = (&fd - &analytic).norm() / analytic.norm();
        worst = worst.max(e);
        ensure(e <= 1e-5, || format!("instance {inst}: relative error {e:e}"))?;
        // the update direction is a descent direction
        let inner: f64 = fd.iter().zip(analytic.iter()).map(|(a, b)| (a.conj() * b).re).sum();
        ensure(inner > 0.0, || {
            format!("instance {inst}: gradient and delta_w disagree in sign")
        })?;
    }
    Ok(format!("10 instances at K = 4, worst relative error {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// 6. projections

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst_unit: f64 = 0.0;
    let mut worst_polar: f64 = 0.0;
    let mut worst_fixed: f64 = 0.0;
    for k in [2usize, 3, 4, 8, 16, 32] {
        for _ in 0..5 {
            let a = random_matrix(k, &mut rng);
            let gs = project_gram_schmidt(&a).map_err(|e| e.to_string())?;
            let sd = project_symmetric(&a).map_err(|e| e.to_string())?;
            worst_unit = worst_unit
                .max(linalg::unitarity_error(&gs))
                .max(linalg::unitarity_error(&sd));
            let svd = a.clone().svd(true, true);
            let polar = svd.u.unwrap() * svd.v_t.unwrap();
            worst_polar = worst_polar.max((&sd - polar).norm());
            let u = random_unitary(k, &mut rng);
            for p in [project_gram_schmidt(&u).unwrap(), project_symmetric(&u).unwrap()] {
                worst_fixed = worst_fixed.max((p - &u).norm());
            }
        }
    }
    ensure(worst_unit <= 1e-10, || format!("||WW* - I||_F = {worst_unit:e}"))?;
    ensure(worst_polar <= 1e-9, || {
        format!("polar factor deviation {worst_polar:e}")
    })?;
    ensure(worst_fixed <= 1e-10, || {
        format!("fixed point deviation {worst_fixed:e}")
    })?;
    Ok(format!(
        "unitarity {worst_unit:.1e}, polar oracle {worst_polar:.1e}, fixed points {worst_fixed:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// 7. desk-scale reduction

fn fraction_above(values: &[f64], g: f64) -> f64 {
    values.iter().filter(|&&v| v > g).count() as f64 / values.len() as f64
}

struct DeskRun {
    r0: f64,
    r1: f64,
    ccdf0: f64,
    ccdf1: f64,
}

fn desk_run(book: &Codebook, epsilon: f64) -> Result<DeskRun, String> {
    let basis = build_basis(16).unwrap();
    let mut cfg = OptimizerConfig::for_carriers(16);
    cfg.epsilon = epsilon;
    cfg.projection = Projection::SymmetricDecorrelation;
    cfg.mode = UpdateMode::Stochastic;
    cfg.max_iters = 2000;
    cfg.stop_tol = 0.0;
    cfg.seed = 7;
    let run = optimizer::run(book, &basis, &cfg).map_err(|e| format!("N={}: {e}", book.n_subsets()))?;
    let before = pmepr_values(book, None, 16).unwrap();
    let after = pmepr_values(book, Some(&run.unitaries), 16).unwrap();
    let g99 = quantile(&before, 0.99);
    Ok(DeskRun {
        r0: run.trace[0].r_value,
        r1: run.trace.last().unwrap().r_value,
        ccdf0: fraction_above(&before, g99),
        ccdf1: fraction_above(&after, g99),
    })
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let q = QamConstellation::new(16).unwrap();
    let book4 = generate_codebook(&q, 16, 200, 4, 707).unwrap();
    let book8 = book4.repartitioned(8).unwrap();
    let eps = 16f64.powf(-1.5);
    let n4 = desk_run(&book4, eps);
    let n8 = desk_run(&book8, eps);
    let elapsed = start.elapsed();
    let describe = |name: &str, r: &Result<DeskRun, String>| match r {
        Ok(d) => format!(
            "{name}: R {:.0} -> {:.0}, CCDF at initial p99 {:.3} -> {:.3}",
            d.r0, d.r1, d.ccdf0, d.ccdf1
        ),
        Err(e) => format!("{name}: {e}"),
    };
    let summary = format!("{}; {}", describe("N=4", &n4), describe("N=8", &n8));
    let d4 = n4.map_err(|_| summary.clone())?;
    ensure(d4.r1 < d4.r0, || format!("R did not decrease; {summary}"))?;
    ensure(d4.ccdf1 < d4.ccdf0, || format!("CCDF did not decrease; {summary}"))?;
    let d8 = n8.map_err(|_| summary.clone())?;
    ensure(d8.r1 <= d4.r1, || format!("N=8 final R above N=4; {summary}"))?;
    within(elapsed, 120)?;
    Ok(format!("{summary} ({:.1} s)", elapsed.as_secs_f64()))
}

// ---------------------------------------------------------------------------
// 8. Jensen floor

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut margin = f64::INFINITY;
    for k in [4usize, 8] {
        let n_subsets = 3;
        let kf = k as f64;
        // subset n holds the columns of sqrt(K) U_n, so its Gram matrix is U_n U_n* = I
        let mut words = Vec::new();
        for _ in 0..n_subsets {
            let u = random_unitary(k, &mut rng);
            for j in 0..k {
                words.push(Codeword::new(u.column(j).iter().map(|z| z * kf.sqrt()).collect()).unwrap());
            }
        }
        let book = Codebook::from_codewords(words, n_subsets).unwrap();
        for n in 0..n_subsets {
            let g = subset_gram(&book, n).unwrap();
            ensure((g - linalg::identity(k)).norm() < 1e-12, || {
                "subset Gram is not the identity".into()
            })?;
        }
        let basis = build_basis(k).unwrap();
        let floor = jensen_floor(k);
        ensure((floor - kf * kf * (2.0 * kf - 1.0)).abs() < 1e-12, || {
            "floor constant".into()
        })?;
        for trial in 0..20 {
            let set = UnitarySet::new((0..n_subsets).map(|_| random_unitary(k, &mut rng)).collect(), 0).unwrap();
            let r = r_statistic(&book, &basis, Some(&set)).unwrap();
            ensure(r >= floor - 1e-6, || format!("K={k} trial {trial}: R = {r} < {floor}"))?;
            margin = margin.min(r - floor);
        }
    }
    Ok(format!(
        "K in {{4, 8}}, 20 unitary sets each, smallest R - K^2(2K-1) = {margin:.3e}"
    ))
}

// ---------------------------------------------------------------------------
// 9. link

fn q_func(x: f64) -> f64 {
    1.0 - Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Exact Gray-labelled square-QAM bit error rate in AWGN, by summing the
/// probability of every decision interval on one axis.
fn gray_qam_ber(side: usize, d: f64, noise_std: f64) -> f64 {
    let level = |i: usize| d * (2.0 * i as f64 - (side as f64 - 1.0));
    let gray = |i: usize| i ^ (i >> 1);
    let bits = side.trailing_zeros() as usize;
    let mut total = 0.0;
    for sent in 0..side {
        for got in 0..side {
            let lo = if got == 0 { f64::NEG_INFINITY } else { level(got) - d };
            let hi = if got == side - 1 { f64::INFINITY } else { level(got) + d };
            let p = q_func((lo - level(sent)) / noise_std) - q_func((hi - level(sent)) / noise_std);
            let flips = (gray(sent) ^ gray(got)).count_ones() as f64;
            total += p * flips;
        }
    }
    total / (side * bits) as f64
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let q = QamConstellation::new(16).unwrap();
    let k = 16;

    let book = generate_codebook(&q, k, 50, 2, 909).unwrap();
    let set = UnitarySet::new(vec![random_unitary(k, &mut rng), random_unitary(k, &mut rng)], 0).unwrap();
    let link = LinkConfig::new(vec![], 1);
    let owner = book.subset_of();
    for (i, c) in book.codewords().iter().enumerate() {
        let rx = channel::transmit(c, owner[i], &set, &link, 0.0, &mut rng).unwrap();
        let bits = channel::receive(&rx.y, rx.side_index, &set, &q).unwrap();
        let want: Vec<u8> = c.symbols().iter().flat_map(|&s| q.bits(q.nearest(s))).collect();
        ensure(bits == want, || {
            format!("noiseless roundtrip lost bits for codeword {i}")
        })?;
        let chat = linalg::adjoint_matvec(set.matrix(owner[i]), &rx.y);
        let err = chat
            .iter()
            .zip(c.symbols())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        ensure(err < 1e-10, || format!("noiseless roundtrip error {err:e}"))?;
    }

    let book = generate_codebook(&q, k, 200, 4, 910).unwrap();
    let identity = UnitarySet::identity(k, 4);
    let link = LinkConfig::new(vec![4.0, 8.0, 12.0], 911);
    let points = ber_sweep(&book, &identity, &q, &link).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for p in &points {
        let eb = book.p_av() / (k * 4) as f64;
        let n0 = eb / 10f64.powf(p.ebn0_db / 10.0);
        let oracle = gray_qam_ber(4, q.half_spacing(), (n0 / 2.0).sqrt());
        let sigma = (oracle * (1.0 - oracle) / p.n_bits as f64).sqrt();
        let z = (p.ber - oracle) / sigma;
        ensure(p.n_errors >= 200, || {
            format!("{} dB: only {} errors", p.ebn0_db, p.n_errors)
        })?;
        ensure(z.abs() <= 3.0, || {
            format!(
                "{} dB: BER {:.4e} vs oracle {oracle:.4e} ({z:.2} sigma)",
                p.ebn0_db, p.ber
            )
        })?;
        notes.push(format!("{} dB {:.3e}/{oracle:.3e} ({z:+.2}σ)", p.ebn0_db, p.ber));
    }
    within(start.elapsed(), 120)?;
    Ok(format!(
        "noiseless roundtrip exact; BER {} ({:.1} s)",
        notes.join(", "),
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------
// 10. determinism

type Snapshot = BTreeMap<String, Vec<u8>>;

/// Subcommand name, directory contents after it ran, and its stdout.
type Stage = (String, Snapshot, Vec<u8>);

fn snapshot(dir: &Path) -> Snapshot {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name().to_string_lossy().into_owned();
        // wall-clock records are the only files allowed to differ
        if name == "timestamps.json" || name == "trace_timing.csv" {
            continue;
        }
        out.insert(name, fs::read(entry.path()).unwrap());
    }
    out
}

fn papr(config: &Path, out: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let output = Command::new(env!("CARGO_BIN_EXE_papr"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !output.status.success() {
        return Err(format!(
            "papr {args:?} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        ));
    }
    // paths echoed on stdout name the output directory
    let text = String::from_utf8_lossy(&output.stdout).replace(out.to_str().unwrap(), "<out>");
    Ok(text.into_bytes())
}

fn pipeline(config: &Path, out: &Path) -> Result<Vec<Stage>, String> {
    let u = out.join("unitaries.bin");
    let u = u.to_str().unwrap();
    let steps: Vec<(&str, Vec<&str>)> = vec![
        ("gen", vec!["gen"]),
        ("bounds", vec!["bounds"]),
        ("ccdf", vec!["ccdf"]),
        ("ber", vec!["ber"]),
        ("optimize", vec!["optimize"]),
        ("bounds --unitaries", vec!["bounds", "--unitaries", u]),
        ("ccdf --unitaries", vec!["ccdf", "--unitaries", u]),
        ("ber --unitaries", vec!["ber", "--unitaries", u]),
        ("optimize --resume", vec!["optimize", "--resume", u]),
        ("verify", vec!["verify"]),
    ];
    let mut states = Vec::new();
    for (name, args) in steps {
        let stdout = papr(config, out, &args)?;
        states.push((name.to_owned(), snapshot(out), stdout));
    }
    Ok(states)
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("desk.toml");
    fs::write(
        &config,
        "version = 1\nseed = 42\n\n[codebook]\ncarriers = 16\ncount = 100\nsubsets = 4\n\n\
         [optimizer]\nepsilon = 0.002\nmax_iters = 100\ncheckpoint_every = 25\n\n\
         [ber]\nebn0 = { start_db = 4.0, stop_db = 8.0, step_db = 4.0 }\ntarget_errors = 100\n",
    )
    .unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let first = pipeline(&config, &a)?;
    let second = pipeline(&config, &b)?;
    // a third pass over the first directory checks reruns in place
    let rerun = pipeline(&config, &a)?;
    let mut compared = 0;
    for ((name, s1, o1), (_, s2, o2)) in first.iter().zip(&second) {
        ensure(s1.keys().eq(s2.keys()), || {
            format!("{name}: file sets differ between directories")
        })?;
        for (file, bytes) in s1 {
            ensure(bytes == &s2[file], || {
                format!("{name}: {file} differs between directories")
            })?;
            compared += 1;
        }
        ensure(o1 == o2, || format!("{name}: stdout differs between directories"))?;
    }
    let (last, again) = (&first.last().unwrap().1, &rerun.last().unwrap().1);
    ensure(last == again, || "rerun in place changed the outputs".into())?;
    for ((name, _, o1), (_, _, o3)) in first.iter().zip(&rerun) {
        ensure(o1 == o3, || format!("{name}: stdout differs on rerun"))?;
    }
    Ok(format!(
        "10 subcommand invocations, {compared} file comparisons byte-identical"
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 10] = [
        ("decomposition identities", criterion_1),
        ("bound-chain soundness", criterion_2),
        ("Gaussian fourth moment", criterion_3),
        ("Chernoff optimum", criterion_4),
        ("gradient correctness", criterion_5),
        ("projection correctness", criterion_6),
        ("desk-scale reduction trend", criterion_7),
        ("Jensen floor", criterion_8),
        ("link sanity", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
