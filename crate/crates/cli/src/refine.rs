//! `refine`: read a symmetric matrix, build an initial block of eigenvector
//! guesses, run the WY-based refinement toward the requested end of the
//! spectrum, and write the refined block plus history.csv, outcome.json,
//! and manifest.json.
//!
//! Exit status is the machine contract: 0 converged, 3 stopped at the
//! iteration cap, 4 diverged.
//!
//! With `--preprocess auto` (the default) a run that fails while its Ritz
//! values show a persistent cluster — three consecutive iterations with the
//! minimal gap inside the detection width, or an outright divergence — is
//! retried once from a Rayleigh–Ritz rotation of the same initial block,
//! with the paired-column correction disabled (`beta = zero`) and the guard
//! widened to the detection width. `--preprocess always` applies the same
//! treatment up front when the initial Ritz values are clustered.

use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use eigrefine::cluster::{detect_clusters, rayleigh_ritz};
use eigrefine::linalg::{
    dot, market, two_norm_estimate, ParallelApply, SplitMix64, SymStorage, SymmetricOperator,
    VectorBlock, UNIT_ROUNDOFF,
};
use eigrefine::oracle::{jacobi_eig, perturb_basis, round_binary32};
use eigrefine::refine::{
    history_csv, resolve_delta, run as run_refinement, BetaPolicy, DeltaPolicy, RefineConfig,
    RefineOutcome, RefineStatus,
};
use eigrefine::variants::{map_back, prepare_target, PreparedTarget, TargetKind, TargetSpec};

use crate::manifest::{effective_seed, emit, CliResult, RunManifest};

/// Iteration cap of the rounded subspace-iteration initializer. It stands in
/// for a single-precision eigensolver: baseline quality, not
/// performance-comparable.
const SUBSPACE_INIT_ITERS: usize = 200;

#[derive(Args)]
pub struct RefineArgs {
    /// Symmetric matrix in Matrix Market format (coordinate or array).
    #[arg(long)]
    pub matrix: PathBuf,
    /// Number of leading target eigenpairs convergence is judged on.
    #[arg(long)]
    pub k: usize,
    /// Columns carried by the iteration (default k). Extra trailing columns
    /// cost work per step but sharpen the targets' contraction.
    #[arg(long = "K", value_name = "K")]
    pub big_k: Option<usize>,
    /// Which end of the spectrum the targets come from.
    #[arg(long, value_enum, default_value_t = TargetArg::LargestMagnitude)]
    pub target: TargetArg,
    /// Initial block: round32 | perturb[=SIGMA] | file=PATH | subspace.
    #[arg(long, default_value = "round32")]
    pub init: String,
    /// Correction policy for column pairs inside the cluster guard.
    #[arg(long, value_enum, default_value_t = BetaArg::Paired)]
    pub beta: BetaArg,
    /// Cluster-guard width multiplier: delta = C · ‖A‖_∞ · unit roundoff.
    #[arg(long, default_value_t = 10.0)]
    pub delta_c: f64,
    /// Fixed cluster-guard width (overrides --delta-c).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Stop when the full correction norm falls below this.
    #[arg(long, default_value_t = 1e-8)]
    pub corr_tol: f64,
    /// Stop when the leading-k relative residual falls below this.
    #[arg(long, default_value_t = 1e-14)]
    pub resid_tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Cluster preprocessing: off, auto (retry on failure), always.
    #[arg(long, value_enum, default_value_t = PreprocessArg::Auto)]
    pub preprocess: PreprocessArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Known next eigenvalue beyond the targets (in the target ordering),
    /// used to place the spectrum shift; estimated when omitted.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_next: Option<f64>,
    /// Fan matrix products across threads (bitwise identical to serial).
    #[arg(long)]
    pub parallel: bool,
    /// Directory for x_refined.mtx, history.csv, outcome.json, manifest.json.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    LargestMagnitude,
    Smallest,
    Largest,
    SmallestMagnitude,
}

impl TargetArg {
    fn kind(self) -> TargetKind {
        match self {
            TargetArg::LargestMagnitude => TargetKind::LargestMagnitude,
            TargetArg::Smallest => TargetKind::Smallest,
            TargetArg::Largest => TargetKind::Largest,
            TargetArg::SmallestMagnitude => TargetKind::SmallestMagnitude,
        }
    }

    fn name(self) -> &'static str {
        match self {
            TargetArg::LargestMagnitude => "largest-magnitude",
            TargetArg::Smallest => "smallest",
            TargetArg::Largest => "largest",
            TargetArg::SmallestMagnitude => "smallest-magnitude",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BetaArg {
    /// Symmetrize guarded pairs via the halved inner product.
    Paired,
    /// Freeze guarded pairs (recommended for exactly repeated eigenvalues).
    Zero,
}

impl BetaArg {
    fn policy(self) -> BetaPolicy {
        match self {
            BetaArg::Paired => BetaPolicy::PairedHalfInner,
            BetaArg::Zero => BetaPolicy::Zero,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PreprocessArg {
    Off,
    Auto,
    Always,
}

/// How the initial block is built.
enum InitSpec {
    /// Reference eigenvectors rounded through binary32 (dense input only).
    Round32,
    /// Reference eigenvectors with a random tangent perturbation of the
    /// given size (dense input only).
    Perturb(f64),
    /// A Matrix Market array file.
    File(PathBuf),
    /// Rounded subspace iteration on the (shifted) operator.
    Subspace,
}

impl InitSpec {
    fn parse(text: &str) -> CliResult<Self> {
        if text == "round32" {
            return Ok(InitSpec::Round32);
        }
        if text == "subspace" {
            return Ok(InitSpec::Subspace);
        }
        if text == "perturb" {
            return Ok(InitSpec::Perturb(1e-6));
        }
        if let Some(sigma) = text.strip_prefix("perturb=") {
            let sigma: f64 = sigma
                .parse()
                .map_err(|_| format!("bad perturbation size in --init {text}"))?;
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(format!("perturbation size must be positive, got {sigma}").into());
            }
            return Ok(InitSpec::Perturb(sigma));
        }
        if let Some(path) = text.strip_prefix("file=") {
            return Ok(InitSpec::File(PathBuf::from(path)));
        }
        Err(format!(
            "unknown --init {text:?}; expected round32, perturb[=SIGMA], file=PATH, or subspace"
        )
        .into())
    }

    fn describe(&self) -> String {
        match self {
            InitSpec::Round32 => "round32".into(),
            InitSpec::Perturb(s) => format!("perturb={s}"),
            InitSpec::File(p) => format!("file={}", p.display()),
            InitSpec::Subspace => "subspace".into(),
        }
    }
}

/// Column order of the reference eigendecomposition (sorted by descending
/// magnitude) that lists the targets of `kind` first.
fn target_order(values: &[f64], kind: TargetKind) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    match kind {
        TargetKind::LargestMagnitude => {}
        TargetKind::SmallestMagnitude => idx.reverse(),
        TargetKind::Smallest => idx.sort_by(|&a, &b| values[a].total_cmp(&values[b])),
        TargetKind::Largest => idx.sort_by(|&a, &b| values[b].total_cmp(&values[a])),
    }
    idx
}

/// Rounded subspace iteration on the refinement operator followed by a
/// Rayleigh–Ritz rotation: the sparse-friendly initializer.
fn subspace_init(op: &dyn SymmetricOperator, cols: usize, seed: u64) -> CliResult<VectorBlock> {
    let n = op.n();
    let mut rng = SplitMix64::new(seed ^ 0x5EED_CAFE_F00D);
    let mut x = VectorBlock::from_fn(n, cols, |_, _| rng.next_normal()).orthonormalize()?;
    x = round_binary32(&x)?;
    for _ in 0..SUBSPACE_INIT_ITERS {
        let w = op.apply_block(&x)?;
        x = round_binary32(&w.orthonormalize()?)?;
    }
    Ok(rayleigh_ritz(op, &x)?.z)
}

fn build_init(
    init: &InitSpec,
    storage: &SymStorage,
    op: &dyn SymmetricOperator,
    kind: TargetKind,
    cols: usize,
    seed: u64,
) -> CliResult<VectorBlock> {
    let n = op.n();
    match init {
        InitSpec::File(path) => {
            let b = market::read_block(path)?;
            if b.nrows() != n {
                return Err(format!(
                    "initial block has {} rows but the matrix is {n}x{n}",
                    b.nrows()
                )
                .into());
            }
            if b.ncols() < cols {
                return Err(format!(
                    "initial block has {} columns but K = {cols} are needed",
                    b.ncols()
                )
                .into());
            }
            Ok(b.columns(0, cols))
        }
        InitSpec::Subspace => subspace_init(op, cols, seed),
        InitSpec::Round32 | InitSpec::Perturb(_) => {
            let dense = match storage {
                SymStorage::Dense(d) => d,
                SymStorage::Sparse(_) => {
                    return Err(
                        "reference-eigenvector initialization (round32/perturb) requires dense \
                         storage; use --init subspace or --init file=PATH for sparse matrices"
                            .into(),
                    )
                }
            };
            let eig = jacobi_eig(dense)?;
            let order = target_order(&eig.values, kind);
            let mut x = VectorBlock::zeros(n, cols);
            for (j, &src) in order.iter().take(cols).enumerate() {
                x.col_mut(j).copy_from_slice(eig.vectors.col(src));
            }
            match init {
                InitSpec::Round32 => Ok(round_binary32(&x)?),
                InitSpec::Perturb(sigma) => Ok(perturb_basis(&x, *sigma, seed ^ 0x9E37)?.0),
                _ => unreachable!(),
            }
        }
    }
}

/// Guard width for a preprocessed run, or `None` when the Ritz values show
/// no cluster worth special handling.
///
/// A degenerate pair's Rayleigh-quotient gap wanders at the scale of the
/// squared subspace error while the tail error decays, so the guard must sit
/// above that transient for the pair to stay frozen (`beta = zero`), yet far
/// below the cluster-to-rest separation so genuinely separated pairs keep
/// their gap-divided corrections. Both scales are observable: the separation
/// from the Ritz values, the error from the block residual of the Ritz
/// basis. The residual also bounds how far each Ritz value can sit from a
/// true eigenvalue, which is what decides whether two of them belong to the
/// same cluster — a degenerate pair seen through an imperfect basis shows a
/// gap at the noise scale, not at machine precision.
fn recovery_delta(
    op: &dyn SymmetricOperator,
    rr: &eigrefine::cluster::RitzResult,
    delta_detect: f64,
) -> CliResult<Option<f64>> {
    let w = op.apply_block(&rr.z)?;
    let mut resid2 = 0.0;
    let mut rmax = 0.0f64;
    for j in 0..rr.z.ncols() {
        let mut col2 = 0.0;
        for i in 0..rr.z.nrows() {
            let r = w.at(i, j) - rr.values[j] * rr.z.at(i, j);
            col2 += r * r;
        }
        resid2 += col2;
        rmax = rmax.max(col2.sqrt());
    }
    let cluster_tol = delta_detect.max(2.0 * rmax);
    let groups = detect_clusters(&rr.values, cluster_tol);
    if groups.is_empty() {
        return Ok(None);
    }
    let mut sep = f64::INFINITY;
    for g in &groups {
        for &i in g {
            for (j, &v) in rr.values.iter().enumerate() {
                if !g.contains(&j) {
                    sep = sep.min((rr.values[i] - v).abs());
                }
            }
        }
    }
    let norm = op.norm_inf();
    if !sep.is_finite() || sep <= 0.0 {
        sep = norm; // every carried column is in one cluster
    }
    let eps0 = (resid2.sqrt() / sep).min(0.5);
    let transient = 100.0 * eps0 * eps0 * norm;
    Ok(Some(transient.clamp(delta_detect, (sep / 10.0).max(delta_detect))))
}

/// Why an automatic preprocessing retry fired, if it should.
fn recovery_trigger(outcome: &RefineOutcome, delta_detect: f64) -> Option<&'static str> {
    if outcome.status == RefineStatus::Diverged {
        return Some("divergence");
    }
    let mut streak = 0usize;
    for h in &outcome.history {
        match h.min_gap {
            Some(g) if g <= delta_detect => {
                streak += 1;
                if streak >= 3 {
                    return Some("cluster-signal");
                }
            }
            _ => streak = 0,
        }
    }
    None
}

fn status_exit(status: RefineStatus) -> u8 {
    match status {
        RefineStatus::Converged => 0,
        RefineStatus::MaxIter => 3,
        RefineStatus::Diverged => 4,
    }
}

pub fn run(args: &RefineArgs) -> CliResult<u8> {
    let seed = effective_seed(args.seed)?;
    let init = InitSpec::parse(&args.init)?;
    let k = args.k;
    let big_k = args.big_k.unwrap_or(k);
    if k == 0 || big_k < k {
        return Err(format!("need 1 <= k <= K, got k = {k}, K = {big_k}").into());
    }

    let storage = market::read_operator(&args.matrix)?;
    let serial: &dyn SymmetricOperator = storage.as_operator();
    let parallel_wrap;
    let base: &dyn SymmetricOperator = if args.parallel {
        parallel_wrap = ParallelApply::new(serial);
        &parallel_wrap
    } else {
        serial
    };
    let n = base.n();
    if big_k > n {
        return Err(format!("K = {big_k} exceeds the matrix dimension {n}").into());
    }

    let kind = args.target.kind();
    let spec = TargetSpec { kind, lambda_next: args.lambda_next };
    let prepared: PreparedTarget = prepare_target(base, &spec, k, seed).map_err(|e| {
        format!(
            "cannot place the spectrum shift for --target {}: {e}; the shift is the midpoint \
             between the operator norm bound and the next eigenvalue beyond the targets — pass \
             --lambda-next if it cannot be estimated",
            args.target.name()
        )
    })?;
    let op = prepared.operator.as_dyn();
    if prepared.degenerate {
        eprintln!(
            "warning: the estimated next eigenvalue leaves no margin; the shifted spectrum may \
             not separate the targets"
        );
    }

    let delta_policy = match args.delta {
        Some(d) => DeltaPolicy::Fixed(d),
        None => DeltaPolicy::Auto { c: args.delta_c },
    };
    let delta_resolved = resolve_delta(op, delta_policy)?;
    // Width at which near-equal Rayleigh quotients count as a cluster for
    // the preprocessing trigger: the guard itself, floored at the rounding
    // noise a degenerate pair actually exhibits.
    let delta_detect = delta_resolved.max(100.0 * n as f64 * UNIT_ROUNDOFF * op.norm_inf());

    let mut cfg = RefineConfig::new(k);
    cfg.beta = args.beta.policy();
    cfg.delta = delta_policy;
    cfg.stop.corr_tol = args.corr_tol;
    cfg.stop.resid_tol = args.resid_tol;
    cfg.stop.max_iter = args.max_iter;

    let x0 = build_init(&init, &storage, op, kind, big_k, seed)?;

    let mut preprocessed = false;
    let mut trigger: Option<&'static str> = None;
    let outcome = match args.preprocess {
        PreprocessArg::Off => run_refinement(op, &x0, &cfg)?,
        PreprocessArg::Always => {
            preprocessed = true;
            let rr = rayleigh_ritz(op, &x0)?;
            let mut cfg2 = cfg.clone();
            if let Some(d) = recovery_delta(op, &rr, delta_detect)? {
                trigger = Some("ritz-cluster");
                cfg2.beta = BetaPolicy::Zero;
                cfg2.delta = DeltaPolicy::Fixed(d);
            }
            run_refinement(op, &rr.z, &cfg2)?
        }
        PreprocessArg::Auto => {
            let plain = run_refinement(op, &x0, &cfg)?;
            if plain.status != RefineStatus::Converged {
                if let Some(t) = recovery_trigger(&plain, delta_detect) {
                    preprocessed = true;
                    trigger = Some(t);
                    let rr = rayleigh_ritz(op, &x0)?;
                    let mut cfg2 = cfg.clone();
                    cfg2.beta = BetaPolicy::Zero;
                    cfg2.delta = DeltaPolicy::Fixed(
                        recovery_delta(op, &rr, delta_detect)?.unwrap_or(delta_detect),
                    );
                    run_refinement(op, &rr.z, &cfg2)?
                } else {
                    plain
                }
            } else {
                plain
            }
        }
    };

    // Eigenvalues and residuals on the unshifted matrix.
    let w = base.apply_block(&outcome.xhat)?;
    let mut rho = Vec::with_capacity(big_k);
    for j in 0..outcome.xhat.ncols() {
        rho.push(dot(outcome.xhat.col(j), w.col(j)));
    }
    let mapped = map_back(prepared.kind, prepared.alpha, &outcome.eigenvalues, &rho);
    let base_norm = two_norm_estimate(base)?;
    let mut resid_base = Vec::with_capacity(outcome.xhat.ncols());
    for (j, &lam) in mapped.iter().enumerate() {
        let mut s = 0.0;
        for (wi, xi) in w.col(j).iter().zip(outcome.xhat.col(j)) {
            let r = wi - lam * xi;
            s += r * r;
        }
        resid_base.push(s.sqrt() / base_norm);
    }

    fs::create_dir_all(&args.out_dir)?;
    let x_path = args.out_dir.join("x_refined.mtx");
    let h_path = args.out_dir.join("history.csv");
    let o_path = args.out_dir.join("outcome.json");
    let m_path = args.out_dir.join("manifest.json");

    market::write_block(&x_path, &outcome.xhat)?;
    fs::write(&h_path, history_csv(&outcome.history))?;

    let mut report = match serde_json::to_value(&outcome)? {
        serde_json::Value::Object(map) => map,
        other => return Err(format!("outcome serialized to a non-object: {other}").into()),
    };
    report.insert("target".into(), args.target.name().into());
    report.insert("alpha".into(), serde_json::json!(prepared.alpha));
    report.insert("lambda_next".into(), serde_json::json!(prepared.lambda_next));
    report.insert("eigenvalues_base".into(), serde_json::json!(mapped));
    report.insert("per_vector_resid_base".into(), serde_json::json!(resid_base));
    report.insert("preprocessed".into(), preprocessed.into());
    report.insert("recovery_trigger".into(), serde_json::json!(trigger));
    report.insert(
        "square_base_applies".into(),
        serde_json::json!(prepared.operator.square_applies()),
    );
    fs::write(&o_path, serde_json::to_string_pretty(&report)?)?;

    let mut manifest = RunManifest::new("refine", seed);
    manifest.hash_input("matrix", &args.matrix)?;
    if let InitSpec::File(p) = &init {
        manifest.hash_input("initial_block", p)?;
    }
    manifest.config("matrix", args.matrix.display().to_string());
    manifest.config("k", k);
    manifest.config("K", big_k);
    manifest.config("target", args.target.name());
    manifest.config("init", init.describe());
    manifest.config("beta", matches!(args.beta, BetaArg::Zero).then_some("zero").unwrap_or("paired"));
    manifest.config("delta_c", args.delta_c);
    manifest.config("delta_fixed", serde_json::json!(args.delta));
    manifest.config("delta_resolved", delta_resolved);
    manifest.config("delta_detect", delta_detect);
    manifest.config("corr_tol", args.corr_tol);
    manifest.config("resid_tol", args.resid_tol);
    manifest.config("max_iter", args.max_iter);
    manifest.config(
        "preprocess",
        match args.preprocess {
            PreprocessArg::Off => "off",
            PreprocessArg::Auto => "auto",
            PreprocessArg::Always => "always",
        },
    );
    manifest.config("parallel", args.parallel);
    manifest.config("lambda_next_flag", serde_json::json!(args.lambda_next));
    manifest.config("alpha", prepared.alpha);
    manifest.artifact("x_refined", &x_path);
    manifest.artifact("history", &h_path);
    manifest.artifact("outcome", &o_path);
    manifest.artifact("manifest", &m_path);
    let code = status_exit(outcome.status);
    manifest.summary("status", format!("{:?}", outcome.status));
    manifest.summary("iters", outcome.iters);
    manifest.summary("rel_resid", outcome.rel_resid);
    manifest.summary("exit_code", code);
    manifest.summary("preprocessed", preprocessed);
    manifest.summary("recovery_trigger", serde_json::json!(trigger));
    manifest.write(&m_path)?;

    emit(format!(
        "{:?} after {} iterations: rel_resid {:.3e}, corr stop {:.3e}",
        outcome.status, outcome.iters, outcome.rel_resid, args.corr_tol
    ));
    if let Some(d) = &outcome.diagnostic {
        emit(format!("diagnostic: {d}"));
    }
    if preprocessed {
        emit(format!(
            "preprocessing applied ({})",
            trigger.unwrap_or("requested up front")
        ));
    }
    for p in [&x_path, &h_path, &o_path, &m_path] {
        emit(format!("wrote {}", p.display()));
    }
    Ok(code)
}

/// Context passed to tests for path handling below.
#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_spec_parses_all_forms() {
        assert!(matches!(InitSpec::parse("round32").unwrap(), InitSpec::Round32));
        assert!(matches!(InitSpec::parse("subspace").unwrap(), InitSpec::Subspace));
        match InitSpec::parse("perturb=1e-4").unwrap() {
            InitSpec::Perturb(s) => assert_eq!(s, 1e-4),
            _ => panic!("expected perturb"),
        }
        match InitSpec::parse("file=/tmp/x.mtx").unwrap() {
            InitSpec::File(p) => assert_eq!(p, PathBuf::from("/tmp/x.mtx")),
            _ => panic!("expected file"),
        }
        assert!(InitSpec::parse("guess").is_err());
        assert!(InitSpec::parse("perturb=-1").is_err());
    }

    #[test]
    fn target_order_lists_targets_first() {
        // Reference ordering is by descending magnitude.
        let values = [-2.0, 1.5, -1.0, 0.5];
        assert_eq!(target_order(&values, TargetKind::LargestMagnitude), vec![0, 1, 2, 3]);
        assert_eq!(target_order(&values, TargetKind::SmallestMagnitude), vec![3, 2, 1, 0]);
        assert_eq!(target_order(&values, TargetKind::Smallest), vec![0, 2, 3, 1]);
        assert_eq!(target_order(&values, TargetKind::Largest), vec![1, 3, 2, 0]);
    }

    #[test]
    fn trigger_needs_three_consecutive_cluster_rows() {
        use eigrefine::refine::HistoryRecord;
        let row = |gap: Option<f64>| HistoryRecord {
            iter: 1,
            rel_resid: 1.0,
            corr_k: 1.0,
            corr_full: 1.0,
            min_gap: gap,
            delta_hits: 0,
            fallback: false,
        };
        let mut out = RefineOutcome {
            status: RefineStatus::MaxIter,
            iters: 4,
            delta: 1e-12,
            norm_estimate: 1.0,
            eigenvalues: vec![],
            per_vector_resid: vec![],
            rel_resid: 1.0,
            fallback_count: 0,
            diagnostic: None,
            history: vec![row(Some(1e-15)), row(Some(1e-15)), row(None), row(Some(1e-15))],
            xhat: VectorBlock::zeros(1, 1),
        };
        assert_eq!(recovery_trigger(&out, 1e-12), None, "gap in the streak resets it");
        out.history = vec![row(Some(1e-15)), row(Some(1e-15)), row(Some(1e-15))];
        assert_eq!(recovery_trigger(&out, 1e-12), Some("cluster-signal"));
        out.history.clear();
        out.status = RefineStatus::Diverged;
        assert_eq!(recovery_trigger(&out, 1e-12), Some("divergence"));
    }

    #[test]
    fn exit_codes_follow_status() {
        assert_eq!(status_exit(RefineStatus::Converged), 0);
        assert_eq!(status_exit(RefineStatus::MaxIter), 3);
        assert_eq!(status_exit(RefineStatus::Diverged), 4);
    }
}
