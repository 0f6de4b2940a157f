//! Markov and Hoeffding CCDF bounds from the fourth-moment statistic R.

use papr_core::bounds::{jensen_floor, BoundReport, HoeffdingRange};
use papr_core::signal::{pmepr_values, CcdfCurve, GammaGrid};
use papr_core::{build_basis, generate_codebook, QamConstellation};

pub fn run_example() -> papr_core::Result<()> {
    let k = 16;
    let q = QamConstellation::new(16)?;
    let book = generate_codebook(&q, k, 1000, 1, 5)?;
    let basis = build_basis(k)?;
    let grid = GammaGrid::from_db(6.0, 12.0, 1.0)?;
    let empirical = CcdfCurve::from_values(&pmepr_values(&book, None, 16)?, &grid)?;

    for range in [HoeffdingRange::Published, HoeffdingRange::Squared] {
        let report = BoundReport::compute(&book, &basis, None, &grid, range)?;
        println!(
            "{range:?}: R = {:.1} (floor {:.0})",
            report.summary.r_value,
            jensen_floor(k)
        );
        println!("  gamma_db  empirical  markov     hoeffding");
        for i in 0..grid.len() {
            let h = &report.hoeffding[i];
            let shown = if h.valid {
                format!("{:.3e}", h.value)
            } else {
                "-".into()
            };
            println!(
                "  {:>8.1}  {:<9.4}  {:<9.3e}  {shown}",
                10.0 * grid.values()[i].log10(),
                empirical.ccdf[i],
                report.markov[i]
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> papr_core::Result<()> {
    run_example()
}
