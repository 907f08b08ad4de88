//! `analyze`: convergence-theory diagnostics for a spectrum, printed as a
//! JSON report — the separation ratio γ for the chosen k, admissible
//! perturbation-size thresholds, a contraction-bound curve over an ε grid,
//! and the sufficient-separation threshold α, including its reference grid.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use eigrefine::linalg::{market, SymStorage};
use eigrefine::oracle::{jacobi_eig, JACOBI_MAX_N};
use eigrefine::theory::{alpha_grid, alpha_sufficient, contraction_bound, gamma, BoundParams};

use crate::manifest::{emit, CliResult};

/// Points on the ε grid of the contraction-bound curve.
const CURVE_POINTS: usize = 13;
/// ε at which the admissibility thresholds are reported (the constants are
/// essentially at their limiting values there).
const SMALL_EPS: f64 = 1e-8;

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Comma-separated eigenvalues, e.g. --lambdas 1,0.5,0.25
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lambdas: Option<Vec<f64>>,
    /// Spectrum CSV (index,lambda or one value per line).
    #[arg(long, conflicts_with = "lambdas")]
    pub spectrum: Option<PathBuf>,
    /// Matrix Market file; its spectrum is computed by the dense reference
    /// eigensolver.
    #[arg(long, conflicts_with_all = ["lambdas", "spectrum"])]
    pub matrix: Option<PathBuf>,
    /// Number of leading (largest-magnitude) target eigenpairs.
    #[arg(long)]
    pub k: usize,
    /// Evaluate the contraction bound at this subspace error.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Evaluate the sufficient-separation threshold α(ρ₁, ρ₂).
    #[arg(long, requires = "rho2")]
    pub rho1: Option<f64>,
    #[arg(long, requires = "rho1")]
    pub rho2: Option<f64>,
}

fn load_spectrum(args: &AnalyzeArgs) -> CliResult<Vec<f64>> {
    if let Some(l) = &args.lambdas {
        return Ok(l.clone());
    }
    if let Some(path) = &args.spectrum {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut vals = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line == "index,lambda" {
                continue;
            }
            let field = line.rsplit(',').next().unwrap_or(line).trim();
            vals.push(
                field
                    .parse::<f64>()
                    .map_err(|_| format!("bad spectrum value {field:?} in {}", path.display()))?,
            );
        }
        if vals.is_empty() {
            return Err(format!("{} contains no eigenvalues", path.display()).into());
        }
        return Ok(vals);
    }
    if let Some(path) = &args.matrix {
        let storage = market::read_operator(path)?;
        if storage.n() > JACOBI_MAX_N {
            return Err(format!(
                "matrix dimension {} exceeds the reference eigensolver cap {JACOBI_MAX_N}",
                storage.n()
            )
            .into());
        }
        let dense = match storage {
            SymStorage::Dense(d) => d,
            SymStorage::Sparse(s) => s.to_dense(),
        };
        return Ok(jacobi_eig(&dense)?.values);
    }
    Err("analyze needs one of --lambdas, --spectrum, or --matrix".into())
}

/// Worst (largest) one-step transfer bound over the k targets, at ε.
fn worst_bound(lambdas: &[f64], k: usize, norm: f64, eps: f64) -> CliResult<f64> {
    let mut worst = f64::NEG_INFINITY;
    for j in 0..k {
        let p = BoundParams { epsilon: eps, norm_a: norm, lambdas: lambdas.to_vec(), k, j };
        worst = worst.max(contraction_bound(&p)?.bound);
    }
    Ok(worst)
}

pub fn run(args: &AnalyzeArgs) -> CliResult<u8> {
    let lambdas = load_spectrum(args)?;
    let n = lambdas.len();
    if args.k == 0 || args.k > n {
        return Err(format!("k must lie in 1..={n}, got {}", args.k).into());
    }
    let g = gamma(&lambdas, args.k)?;
    let norm = lambdas.iter().fold(0.0f64, |m, &l| m.max(l.abs()));

    // Admissibility thresholds at the small-ε constants, worst case over
    // the targets.
    let mut gap_limit = f64::INFINITY;
    let mut abs_limit = f64::INFINITY;
    for j in 0..args.k {
        let p = BoundParams {
            epsilon: SMALL_EPS,
            norm_a: norm,
            lambdas: lambdas.clone(),
            k: args.k,
            j,
        };
        let b = contraction_bound(&p)?;
        gap_limit = gap_limit.min(b.eps_limit_gap);
        abs_limit = abs_limit.min(b.eps_limit_abs);
    }
    let eps_cap = gap_limit.min(abs_limit).min(0.28);

    // Log-spaced ε curve from 1e−8 up to 95% of the admissible cap.
    let mut curve = Vec::new();
    let hi = (0.95 * eps_cap).max(SMALL_EPS * 10.0);
    for t in 0..CURVE_POINTS {
        let f = t as f64 / (CURVE_POINTS - 1) as f64;
        let eps = SMALL_EPS * (hi / SMALL_EPS).powf(f);
        match worst_bound(&lambdas, args.k, norm, eps) {
            Ok(b) => curve.push(serde_json::json!({ "epsilon": eps, "bound": b })),
            Err(_) => break,
        }
    }

    let bound_at_epsilon = match args.epsilon {
        Some(e) => Some(worst_bound(&lambdas, args.k, norm, e)?),
        None => None,
    };
    let alpha_requested = match (args.rho1, args.rho2) {
        (Some(r1), Some(r2)) => Some(alpha_sufficient(r1, r2)?),
        _ => None,
    };
    let grid: Vec<serde_json::Value> = alpha_grid()
        .into_iter()
        .map(|(r1, r2, a)| serde_json::json!({ "rho1": r1, "rho2": r2, "alpha": a }))
        .collect();

    let report = serde_json::json!({
        "n": n,
        "k": args.k,
        "gamma": g,
        "necessary_condition_violated": g >= 1.0,
        "norm_bound": norm,
        "admissible_epsilon": { "gap_limit": gap_limit, "abs_limit": abs_limit },
        "bound_curve": curve,
        "bound_at_epsilon": bound_at_epsilon,
        "alpha_requested": alpha_requested,
        "alpha_grid": grid,
    });
    emit(serde_json::to_string_pretty(&report)?);
    Ok(0)
}
