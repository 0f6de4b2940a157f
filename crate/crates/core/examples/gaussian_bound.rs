//! Fourth moment of a Hermitian form under complex Gaussian input, and the
//! CCDF bound it gives for Gaussian codewords.

use papr_core::bounds::{gaussian_ccdf_bound, gaussian_quartic_moment};
use papr_core::signal::GammaGrid;
use papr_core::{build_basis, linalg, CMatrix, Complex64};

pub fn run_example() -> papr_core::Result<()> {
    let k = 4;
    let g = CMatrix::from_fn(k, k, |i, j| Complex64::new(1.0 / (1 + i + j) as f64, 0.0));
    let cov = linalg::identity(k) * Complex64::new(2.0, 0.0);
    let m = gaussian_quartic_moment(&g, &cov)?;
    println!("E[(z* G z)^2] = {:.6}, bound 3 Tr(G Sigma)^2 = {:.6}", m.exact, m.bound);

    let basis = build_basis(16)?;
    let grid = GammaGrid::from_db(6.0, 12.0, 2.0)?;
    let bound = gaussian_ccdf_bound(&linalg::identity(16), &basis, &grid)?;
    for (g, b) in grid.values().iter().zip(bound) {
        println!("  {:>5.1} dB  {b:.4e}", 10.0 * g.log10());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> papr_core::Result<()> {
    run_example()
}
