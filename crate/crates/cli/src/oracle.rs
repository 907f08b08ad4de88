//! `oracle`: run the dense reference eigensolver on a matrix file and write
//! its full decomposition — eigenvalues to CSV (sorted by descending
//! magnitude) and eigenvectors to a Matrix Market array file.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use eigrefine::linalg::{market, SymStorage};
use eigrefine::oracle::{jacobi_eig, JACOBI_MAX_N};

use crate::manifest::{emit, CliResult, RunManifest};

#[derive(Args)]
pub struct OracleArgs {
    /// Symmetric matrix in Matrix Market format.
    #[arg(long)]
    pub matrix: PathBuf,
    /// Directory for eigenvalues.csv, eigenvectors.mtx, manifest.json.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

pub fn run(args: &OracleArgs) -> CliResult<u8> {
    let storage = market::read_operator(&args.matrix)?;
    let n = storage.n();
    if n > JACOBI_MAX_N {
        return Err(format!(
            "matrix dimension {n} exceeds the reference eigensolver cap {JACOBI_MAX_N}; \
             the dense solver is a desk-scale oracle, not a production path"
        )
        .into());
    }
    let dense = match storage {
        SymStorage::Dense(d) => d,
        SymStorage::Sparse(s) => s.to_dense(),
    };
    let eig = jacobi_eig(&dense)?;

    fs::create_dir_all(&args.out_dir)?;
    let v_path = args.out_dir.join("eigenvalues.csv");
    let x_path = args.out_dir.join("eigenvectors.mtx");
    let m_path = args.out_dir.join("manifest.json");
    let mut csv = String::from("index,value\n");
    for (i, v) in eig.values.iter().enumerate() {
        csv.push_str(&format!("{i},{v:.16e}\n"));
    }
    fs::write(&v_path, csv)?;
    market::write_block(&x_path, &eig.vectors)?;

    let mut manifest = RunManifest::new("oracle", 0);
    manifest.hash_input("matrix", &args.matrix)?;
    manifest.config("matrix", args.matrix.display().to_string());
    manifest.artifact("eigenvalues", &v_path);
    manifest.artifact("eigenvectors", &x_path);
    manifest.artifact("manifest", &m_path);
    manifest.summary("n", n);
    manifest.summary("converged", eig.converged);
    manifest.summary("off_diag_residual", eig.off_diag_residual);
    manifest.write(&m_path)?;

    emit(format!("n = {n}, off-diagonal residual {:.3e}", eig.off_diag_residual));
    for p in [&v_path, &x_path, &m_path] {
        emit(format!("wrote {}", p.display()));
    }
    Ok(0)
}
