//! Empirical PMEPR distribution of a random 16-QAM codebook.

use papr_core::signal::{linear_to_db, pmepr_values, quantile, CcdfCurve, GammaGrid};
use papr_core::{generate_codebook, QamConstellation};

pub fn run_example() -> papr_core::Result<()> {
    let q = QamConstellation::new(16)?;
    let book = generate_codebook(&q, 32, 1000, 1, 3)?;
    let values = pmepr_values(&book, None, 8)?;
    println!(
        "median {:.2} dB, 99th percentile {:.2} dB",
        linear_to_db(quantile(&values, 0.5)),
        linear_to_db(quantile(&values, 0.99))
    );
    let curve = CcdfCurve::from_values(&values, &GammaGrid::from_db(4.0, 11.0, 1.0)?)?;
    curve.write_csv(std::io::stdout().lock())?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> papr_core::Result<()> {
    run_example()
}
