//! Square QAM, random codebooks and the per-subset Gram matrix.

use papr_core::{generate_codebook, linalg, subset_gram, Codebook, QamConstellation};

pub fn run_example() -> papr_core::Result<()> {
    let q = QamConstellation::new(16)?;
    println!(
        "16-QAM: half spacing {:.4}, mean energy {:.4}, peak energy {:.4}",
        q.half_spacing(),
        q.mean_energy(),
        q.peak_energy()
    );
    for i in [0, 5, 15] {
        println!("  point {i:>2} = {:.3}  bits {:?}", q.point(i), q.bits(i));
    }

    let book = generate_codebook(&q, 8, 400, 4, 11)?;
    println!(
        "{} codewords on {} carriers in {} subsets, P_av = {:.4}",
        book.len(),
        book.carriers(),
        book.n_subsets(),
        book.p_av()
    );
    for n in 0..book.n_subsets() {
        let g = subset_gram(&book, n)?;
        println!(
            "  subset {n}: ||g - I||_F = {:.3}",
            (g - linalg::identity(book.carriers())).norm()
        );
    }

    // codebooks serialise to a small binary container
    let mut buf = Vec::new();
    book.write_to(&mut buf)?;
    let back = Codebook::read_from(&buf[..])?;
    println!(
        "round trip through {} bytes: identical = {}",
        buf.len(),
        back.codewords() == book.codewords()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> papr_core::Result<()> {
    run_example()
}
