use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use papr_core::experiment::{self, ExperimentConfig};
use papr_core::Error;

/// Moment bounds on OFDM PMEPR and unitary-precoding PAPR reduction.
#[derive(Parser)]
#[command(name = "papr", version)]
struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Unitary set applied per subset (bounds, ccdf, ber).
    #[arg(long, global = true)]
    unitaries: Option<PathBuf>,
    /// Unitary set to continue optimizing from (optimize).
    #[arg(long, global = true)]
    resume: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the random QAM codebook.
    Gen,
    /// Markov and Hoeffding CCDF bounds.
    Bounds,
    /// Search for per-subset unitary matrices.
    Optimize,
    /// Empirical PMEPR CCDF.
    Ccdf,
    /// Monte Carlo bit error rate.
    Ber,
    /// Invariant suite and manifest check.
    Verify,
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_numerical() {
        ExitCode::from(3)
    } else {
        ExitCode::from(2)
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out_dir = o;
    }
    let unitaries = cli.unitaries.as_deref();
    match cli.command {
        Command::Gen => {
            let path = experiment::cmd_gen(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Bounds => {
            let report = experiment::cmd_bounds(&cfg, unitaries)?;
            println!("{}", serde_json::to_string(&report.summary).map_err(Error::from)?);
        }
        Command::Optimize => {
            let run = experiment::cmd_optimize(&cfg, cli.resume.as_deref())?;
            let first = run.trace.first().map(|p| p.r_value).unwrap_or(f64::NAN);
            let last = run.trace.last().map(|p| p.r_value).unwrap_or(f64::NAN);
            println!(
                "iteration {}: R {first} -> {last}{}",
                run.unitaries.iteration(),
                if run.converged { " (converged)" } else { "" }
            );
        }
        Command::Ccdf => {
            let curve = experiment::cmd_ccdf(&cfg, unitaries)?;
            println!("{} codewords, {} grid points", curve.sample_count, curve.gamma.len());
        }
        Command::Ber => {
            for p in experiment::cmd_ber(&cfg, unitaries)? {
                println!(
                    "{:>6.2} dB  ber {:.3e}  ({} errors / {} bits)",
                    p.ebn0_db, p.ber, p.n_errors, p.n_bits
                );
            }
        }
        Command::Verify => {
            let report = experiment::cmd_verify(&cfg)?;
            report.write(std::io::stdout().lock())?;
            if report.checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::from(3));
            }
            if !report.all_passed() {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
