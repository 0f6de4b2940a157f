//! Precoded 16-QAM OFDM over AWGN with and without a Rapp amplifier.

use papr_core::channel::{ber_sweep, LinkConfig, RappModel};
use papr_core::{generate_codebook, QamConstellation, UnitarySet};

pub fn run_example() -> papr_core::Result<()> {
    let k = 16;
    let q = QamConstellation::new(16)?;
    let book = generate_codebook(&q, k, 256, 4, 23)?;
    let identity = UnitarySet::identity(k, 4);

    let mut link = LinkConfig::new(vec![4.0, 8.0], 29);
    link.target_errors = 100;
    for amplifier in [None, Some(RappModel::from_backoff(2.0, book.p_av(), 2.0)?)] {
        link.amplifier = amplifier;
        link.oversampling = if amplifier.is_some() { 4 } else { 1 };
        println!(
            "{}",
            if amplifier.is_some() {
                "Rapp p = 2, 2 dB backoff"
            } else {
                "linear"
            }
        );
        for p in ber_sweep(&book, &identity, &q, &link)? {
            println!(
                "  {:>4.1} dB  BER {:.3e}  [{:.3e}, {:.3e}]  {} bits",
                p.ebn0_db, p.ber, p.ci_low, p.ci_high, p.n_bits
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> papr_core::Result<()> {
    run_example()
}
