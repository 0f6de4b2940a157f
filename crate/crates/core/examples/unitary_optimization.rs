//! Stochastic descent on per-subset unitary precoders, then the PMEPR
//! distribution before and after.

use papr_core::bounds::jensen_floor;
use papr_core::optimizer;
use papr_core::signal::{pmepr_values, quantile};
use papr_core::{build_basis, generate_codebook, OptimizerConfig, QamConstellation};

pub fn run_example() -> papr_core::Result<()> {
    let k = 16;
    let q = QamConstellation::new(16)?;
    let book = generate_codebook(&q, k, 200, 4, 17)?;
    let basis = build_basis(k)?;

    let mut cfg = OptimizerConfig::for_carriers(k);
    // K^(-3/2) is tuned for large K; at desk sizes use the step that moves W
    // by the same relative amount as at 128 carriers
    cfg.epsilon = OptimizerConfig::matched_step(k, 128);
    cfg.max_iters = 1500;
    cfg.checkpoint_every = 250;
    cfg.seed = 1;
    let run = optimizer::run(&book, &basis, &cfg)?;
    for p in &run.trace {
        println!("  iteration {:>5}  R = {:.1}", p.iteration, p.r_value);
    }
    println!("floor K^2(2K-1) = {:.0}", jensen_floor(k));

    let before = pmepr_values(&book, None, 16)?;
    let after = pmepr_values(&book, Some(&run.unitaries), 16)?;
    let g = quantile(&before, 0.99);
    let above = |v: &[f64]| v.iter().filter(|&&x| x > g).count();
    println!(
        "codewords above the initial 99th percentile: {} -> {}",
        above(&before),
        above(&after)
    );
    println!("max ||WW* - I||_F = {:.1e}", run.unitaries.max_unitarity_error());
    Ok(())
}

#[allow(dead_code)]
fn main() -> papr_core::Result<()> {
    run_example()
}
