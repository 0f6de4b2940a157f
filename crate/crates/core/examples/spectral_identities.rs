//! The aperiodic correlation of a codeword and its spectral quartic form.

use papr_core::bounds::quartic_scale;
use papr_core::spectral::aperiodic_corr;
use papr_core::{build_basis, quartic_sum, Codeword, Complex64};

pub fn run_example() -> papr_core::Result<()> {
    let k = 8;
    let symbols: Vec<Complex64> = (0..k)
        .map(|n| Complex64::from_polar(1.0, 0.7 * (n * n) as f64))
        .collect();
    let c = Codeword::new(symbols)?;
    let rho = aperiodic_corr(&c);
    let correlation_energy = rho[0].norm_sqr() + 2.0 * rho[1..].iter().map(|r| r.norm_sqr()).sum::<f64>();

    let basis = build_basis(k)?;
    let spectral = quartic_sum(&c, &basis, None)?;
    let kf = k as f64;
    println!(
        "(2K-1) sum |rho|^2           = {:.10}",
        (2.0 * kf - 1.0) * correlation_energy
    );
    println!("K(2K-1)/2 * quartic_sum      = {:.10}", quartic_scale(k) * spectral);

    // each C_k is a rank-one projector, so the quadratic forms split ||c||^2
    let x = nalgebra::DVector::from_column_slice(c.symbols());
    let parseval: f64 = (0..k)
        .map(|n| (x.adjoint() * basis.c_operator(n).unwrap() * &x)[(0, 0)].re)
        .sum();
    println!("sum_k c* C_k c = {parseval:.10}, ||c||^2 = {:.10}", c.power());
    Ok(())
}

#[allow(dead_code)]
fn main() -> papr_core::Result<()> {
    run_example()
}
