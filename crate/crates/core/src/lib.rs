//! Moment-based upper bounds on the CCDF of OFDM peak-to-mean envelope power
//! ratio, and PAPR reduction by per-subset unitary precoding.
//!
//! The crate is organised bottom-up:
//!
//! - [`codebook`]: codewords, square QAM, partitioned codebooks.
//! - [`spectral`]: aperiodic correlation, shift-matrix eigendecompositions,
//!   and the quartic spectral sum.
//! - [`signal`]: oversampled baseband synthesis, PMEPR, empirical CCDF.
//! - [`bounds`]: Markov, Hoeffding, Gaussian-input bounds and diagnostics.
//! - [`optimizer`]: gradient descent over unitary matrices with batch and
//!   stochastic updates.
//! - [`channel`]: Rapp amplifier, AWGN link, demapping, BER sweeps.
//! - [`experiment`]: configuration, file outputs and the subcommands behind
//!   the `papr` binary.
//!
//! Runnable walkthroughs of each layer live in `examples/`.

// `!(x > 0.0)` is how NaN gets rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod channel;
pub mod codebook;
mod container;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod optimizer;
pub mod signal;
pub mod spectral;

pub use codebook::{generate_codebook, subset_gram, Codebook, Codeword, QamConstellation};
pub use error::{Error, Result};
pub use linalg::CMatrix;
pub use optimizer::{OptimizerConfig, Projection, UnitarySet, UpdateMode};
pub use spectral::{build_basis, quartic_sum, SpectralBasis};

pub use num_complex::Complex64;
