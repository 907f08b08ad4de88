//! Command-line driver for the eigrefine library.
//!
//! Subcommands:
//!   generate  synthesize test matrices with known spectra
//!   refine    run the iterative eigenvector refinement on a matrix file
//!   analyze   print convergence-theory diagnostics for a spectrum as JSON
//!   oracle    run the dense reference eigensolver and write its output
//!
//! Exit codes are the machine contract: 0 converged (or command succeeded),
//! 2 usage error, 3 stopped at the iteration cap, 4 diverged, 1 any other
//! failure. `EIGREFINE_SEED` overrides `--seed` for every command.

mod analyze;
mod generate;
mod manifest;
mod oracle;
mod refine;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "eigrefine",
    version,
    about = "Iterative refinement of selected eigenvector subsets of real symmetric matrices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a test matrix with a known spectrum and exact eigenvectors.
    Generate(generate::GenerateArgs),
    /// Refine eigenvectors of a matrix read from a Matrix Market file.
    Refine(refine::RefineArgs),
    /// Print separation ratios, admissible perturbation sizes, contraction
    /// bounds, and sufficient-separation thresholds as JSON.
    Analyze(analyze::AnalyzeArgs),
    /// Run the dense reference eigensolver and write eigenvalues/vectors.
    Oracle(oracle::OracleArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => generate::run(&args),
        Command::Refine(args) => refine::run(&args),
        Command::Analyze(args) => analyze::run(&args),
        Command::Oracle(args) => oracle::run(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
