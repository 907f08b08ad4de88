//! The iterative eigenvector refinement loop.
//!
//! One step takes a block X̂ of K approximate unit eigenvectors, builds an
//! orthogonal Ĥ with Ĥ·e_j = x̂_j from a compact WY factorization, measures
//! the residual W − X̂·D̃ (W = A·X̂, D̃ the Rayleigh quotients), transfers it
//! into the Ĥ basis as V = ĤᵀR, and solves the decoupled first-order
//! correction equations entrywise on an n×K block Ẽ:
//!
//!   ẽ_jj = (1 − α_j)/2                          (norm correction)
//!   ẽ_ij = v_ij / (d̃_j − d̃_i)   i ≤ K, i ≠ j   (within-target rotation)
//!   ẽ_ij = v_ij / d̃_j           i > K          (tail components, whose
//!                                eigenvalues are dominated by the targets)
//!
//! The update is X̂ ← X̂ + Ĥ·Ẽ. Within-target denominators smaller than a
//! guard δ would divide rounding noise by rounding noise, so those entries
//! are replaced by a policy value β instead (see [`BetaPolicy`]).
//!
//! Convergence is judged on the leading k ≤ K columns; refining extra
//! trailing columns (K > k) suppresses the error the discarded tail leaks
//! into the targets.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, two_norm_estimate, SymmetricOperator, VectorBlock, UNIT_ROUNDOFF};
use crate::wy::factor_with_fallback;

/// How the within-target guard δ is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum DeltaPolicy {
    /// Use this δ verbatim.
    Fixed(f64),
    /// δ = c·‖A‖_∞·u with u the unit roundoff.
    Auto {
        /// Multiplier; [`DeltaPolicy::default`] uses 10.
        c: f64,
    },
}

impl Default for DeltaPolicy {
    fn default() -> Self {
        DeltaPolicy::Auto { c: 10.0 }
    }
}

/// Value used for a within-target entry whose Rayleigh-quotient gap is ≤ δ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum BetaPolicy {
    /// β_ij = −x̂_iᵀx̂_j / 2: half the inner product, which rotates the pair
    /// toward orthogonality while leaving their (ambiguous) mixture alone.
    #[default]
    PairedHalfInner,
    /// β_ij = 0: freeze the pair's relative mixture entirely. The right
    /// choice after a Rayleigh–Ritz preprocessing pass, whose output already
    /// diagonalizes the block.
    Zero,
}

/// Stopping and divergence-guard thresholds.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StopRule {
    /// Stop when ‖Ẽ[:, 1..k]‖_F falls to or below this.
    pub corr_tol: f64,
    /// Stop when the leading-k relative residual falls to or below this.
    pub resid_tol: f64,
    /// Hard iteration cap.
    pub max_iter: usize,
    /// Declare divergence when the full correction norm grows by this
    /// factor over `growth_window` iterations.
    pub growth_factor: f64,
    /// Look-back distance of the growth guard.
    pub growth_window: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            corr_tol: 1e-8,
            resid_tol: 1e-14,
            max_iter: 1000,
            growth_factor: 10.0,
            growth_window: 3,
        }
    }
}

/// Configuration of [`run`]. The block width K is taken from the initial
/// block; `k ≤ K` is the number of leading columns convergence is judged on.
#[derive(Clone, Debug, Serialize)]
pub struct RefineConfig {
    /// Number of target columns (leading k).
    pub k: usize,
    /// Guard policy for within-target Rayleigh-quotient gaps.
    pub delta: DeltaPolicy,
    /// Replacement value policy for guarded entries.
    pub beta: BetaPolicy,
    /// Stopping rules.
    pub stop: StopRule,
    /// Re-orthonormalize the block when ‖X̂ᵀX̂ − I‖_F exceeds this.
    pub reorth_threshold: f64,
}

impl RefineConfig {
    /// Defaults for k target vectors.
    pub fn new(k: usize) -> Self {
        RefineConfig {
            k,
            delta: DeltaPolicy::default(),
            beta: BetaPolicy::default(),
            stop: StopRule::default(),
            reorth_threshold: 1e-4,
        }
    }
}

/// How a run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RefineStatus {
    /// A stopping rule was met.
    Converged,
    /// The iteration cap was reached first.
    MaxIter,
    /// Correction norms grew, or a step broke down numerically (see
    /// `diagnostic`).
    Diverged,
}

/// Per-iteration measurements. `rel_resid`, `corr_k` are over the leading k
/// columns; `corr_full`, `min_gap`, `delta_hits` over all K.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HistoryRecord {
    /// 1-based iteration number.
    pub iter: usize,
    /// ‖(W − X̂D̃)[:, 1..k]‖_F / ‖A‖₂-estimate, measured at entry to the step.
    pub rel_resid: f64,
    /// ‖Ẽ[:, 1..k]‖_F of the correction applied this step.
    pub corr_k: f64,
    /// ‖Ẽ‖_F over all K columns.
    pub corr_full: f64,
    /// Smallest |d̃_j − d̃_i| over pairs; `None` when K = 1.
    pub min_gap: Option<f64>,
    /// Number of within-target pairs that fell under the δ guard.
    pub delta_hits: usize,
    /// Whether the WY factorization needed the sign-shifted fallback.
    pub fallback: bool,
}

/// Result of a refinement run. The refined block itself is in `xhat`
/// (excluded from serialization; artifacts store it separately).
#[derive(Clone, Debug, Serialize)]
pub struct RefineOutcome {
    pub status: RefineStatus,
    /// Iterations actually performed.
    pub iters: usize,
    /// Resolved guard δ.
    pub delta: f64,
    /// ‖A‖₂ estimate used as the residual denominator.
    pub norm_estimate: f64,
    /// Final Rayleigh quotients, one per refined column.
    pub eigenvalues: Vec<f64>,
    /// Final ‖A·x̂_j − d̃_j·x̂_j‖₂ / ‖A‖₂-estimate, one per refined column.
    pub per_vector_resid: Vec<f64>,
    /// Final leading-k relative residual.
    pub rel_resid: f64,
    /// Iterations where the factorization fallback was taken.
    pub fallback_count: usize,
    /// Breakdown description when `status` is `Diverged`.
    pub diagnostic: Option<String>,
    pub history: Vec<HistoryRecord>,
    #[serde(skip)]
    pub xhat: VectorBlock,
}

impl RefineOutcome {
    /// Pretty JSON of everything except the refined block.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("outcome serializes")
    }
}

/// Column gram diagonals α_j = x̂_jᵀx̂_j and Rayleigh quotients
/// d̃_j = x̂_jᵀw_j / α_j for W = A·X̂.
pub fn rayleigh_quotients(x: &VectorBlock, w: &VectorBlock) -> (Vec<f64>, Vec<f64>) {
    let kk = x.ncols();
    let mut alpha = Vec::with_capacity(kk);
    let mut dtilde = Vec::with_capacity(kk);
    for j in 0..kk {
        let a = dot(x.col(j), x.col(j));
        alpha.push(a);
        dtilde.push(dot(x.col(j), w.col(j)) / a);
    }
    (alpha, dtilde)
}

/// Gap statistics gathered while assembling the correction.
#[derive(Clone, Copy, Debug)]
pub struct CorrectionStats {
    pub min_gap: Option<f64>,
    pub delta_hits: usize,
}

/// Assemble the n×K correction Ẽ from the transferred residual V = ĤᵀR
/// (n×K), the gram matrix G = X̂ᵀX̂, α = diag(G), and the Rayleigh
/// quotients. Rows at or below K are tail components divided by d̃_j; the
/// K×K head holds the norm and rotation corrections. Guarded within-target
/// entries (|d̃_j − d̃_i| ≤ δ) get the policy value β on both sides of the
/// pair. Errors with [`Error::NearZeroRayleigh`] when some |d̃_j| ≤ δ (the
/// tail divisions would blow up; shift the spectrum first).
pub fn correction_matrix(
    v: &VectorBlock,
    gram: &VectorBlock,
    alpha: &[f64],
    dtilde: &[f64],
    delta: f64,
    beta: BetaPolicy,
) -> Result<(VectorBlock, CorrectionStats)> {
    let kk = dtilde.len();
    let n = v.nrows();
    if v.ncols() != kk || gram.ncols() != kk || alpha.len() != kk || n < kk {
        return Err(Error::DimensionMismatch(format!(
            "correction inputs disagree: v {}x{}, gram width {}, {} alphas, {} quotients",
            v.nrows(),
            v.ncols(),
            gram.ncols(),
            alpha.len(),
            kk
        )));
    }
    for (j, &d) in dtilde.iter().enumerate() {
        if d.abs() <= delta {
            return Err(Error::NearZeroRayleigh { column: j, value: d, delta });
        }
    }
    let mut e = VectorBlock::zeros(n, kk);
    let mut min_gap = f64::INFINITY;
    let mut delta_hits = 0usize;
    for j in 0..kk {
        for i in 0..kk {
            if i == j {
                e.set(j, j, (1.0 - alpha[j]) / 2.0);
                continue;
            }
            let gap = dtilde[j] - dtilde[i];
            if i < j {
                min_gap = min_gap.min(gap.abs());
            }
            if gap.abs() <= delta {
                if i < j {
                    delta_hits += 1;
                }
                let b = match beta {
                    BetaPolicy::PairedHalfInner => -0.5 * gram.at(i, j),
                    BetaPolicy::Zero => 0.0,
                };
                e.set(i, j, b);
            } else {
                e.set(i, j, v.at(i, j) / gap);
            }
        }
        let inv_d = 1.0 / dtilde[j];
        for i in kk..n {
            e.set(i, j, v.at(i, j) * inv_d);
        }
    }
    let stats = CorrectionStats {
        min_gap: if kk > 1 { Some(min_gap) } else { None },
        delta_hits,
    };
    Ok((e, stats))
}

/// Everything one step measures, alongside the updated block.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub rel_resid: f64,
    pub corr_k: f64,
    pub corr_full: f64,
    pub min_gap: Option<f64>,
    pub delta_hits: usize,
    pub fallback: bool,
    pub dtilde: Vec<f64>,
}

/// One refinement step, updating `x` in place. `norm_scale` is the residual
/// denominator (a ‖A‖₂ estimate); `k` the number of judged columns.
pub fn refine_step(
    op: &dyn SymmetricOperator,
    x: &mut VectorBlock,
    k: usize,
    delta: f64,
    beta: BetaPolicy,
    reorth_threshold: f64,
    norm_scale: f64,
) -> Result<StepRecord> {
    let kk = x.ncols();
    x.normalize_columns()?;
    let mut gram = x.gram();
    if gram.identity_deviation() > reorth_threshold {
        *x = x.orthonormalize()?;
        gram = x.gram();
    }

    let (h, fallback) = factor_with_fallback(x)?;
    if fallback {
        // The fallback factor reproduces X̂·Σ rather than X̂; flip the sign
        // of the affected columns (eigenvector signs are free) so that
        // Ĥ·e_j = x̂_j again. The gram entries pick up the same signs.
        for (j, &s) in h.sigma().iter().enumerate() {
            if s < 0.0 {
                x.scale_col(j, -1.0);
                for i in 0..kk {
                    gram.set(i, j, -gram.at(i, j));
                    gram.set(j, i, -gram.at(j, i));
                }
            }
        }
    }

    let w = op.apply_block(x)?;
    let (alpha, dtilde) = rayleigh_quotients(x, &w);

    // R = W − X̂·D̃ and the leading-k relative residual.
    let mut r = w;
    for j in 0..kk {
        let d = dtilde[j];
        let xc = x.col(j);
        for (ri, &xi) in r.col_mut(j).iter_mut().zip(xc) {
            *ri -= d * xi;
        }
    }
    let mut resid_sq = 0.0;
    for j in 0..k {
        resid_sq += dot(r.col(j), r.col(j));
    }
    let rel_resid = resid_sq.sqrt() / norm_scale;

    // V = ĤᵀR, full height: rows above K drive the within-target
    // corrections, rows below the tail components.
    let v = h.apply_ht(&r)?;
    let (e, stats) = correction_matrix(&v, &gram, &alpha, &dtilde, delta, beta)?;
    if !e.is_finite() {
        return Err(Error::NonFinite("correction block".into()));
    }

    let corr_full = e.frobenius();
    let corr_k = {
        let mut s = 0.0;
        for j in 0..k {
            s += dot(e.col(j), e.col(j));
        }
        s.sqrt()
    };

    // X̂ ← X̂ + Ĥ·Ẽ.
    let update = h.apply_h(&e)?;
    x.add_scaled(&update, 1.0)?;
    if !x.is_finite() {
        return Err(Error::NonFinite("updated block".into()));
    }

    Ok(StepRecord {
        rel_resid,
        corr_k,
        corr_full,
        min_gap: stats.min_gap,
        delta_hits: stats.delta_hits,
        fallback,
        dtilde,
    })
}

/// Resolve the guard δ for an operator under a policy.
pub fn resolve_delta(op: &dyn SymmetricOperator, policy: DeltaPolicy) -> Result<f64> {
    match policy {
        DeltaPolicy::Fixed(d) => {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "fixed delta must be positive and finite, got {d}"
                )));
            }
            Ok(d)
        }
        DeltaPolicy::Auto { c } => {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "delta multiplier must be positive and finite, got {c}"
                )));
            }
            let ni = op.norm_inf();
            if !(ni > 0.0) || !ni.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "auto delta needs a positive finite ‖A‖_∞, got {ni}"
                )));
            }
            Ok(c * ni * UNIT_ROUNDOFF)
        }
    }
}

/// Run the refinement until a stopping rule, the iteration cap, or a
/// breakdown. Numerical breakdowns (near-zero Rayleigh quotients, repeated
/// factorization failure, non-finite values, column collapse) end the run
/// with [`RefineStatus::Diverged`] and a diagnostic; shape and configuration
/// mistakes are returned as errors.
pub fn run(op: &dyn SymmetricOperator, x0: &VectorBlock, cfg: &RefineConfig) -> Result<RefineOutcome> {
    let kk = x0.ncols();
    if x0.nrows() != op.n() {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{} but the block has {} rows",
            op.n(),
            op.n(),
            x0.nrows()
        )));
    }
    if kk == 0 || kk > x0.nrows() {
        return Err(Error::InvalidArgument(format!(
            "block width must lie in 1..=n, got {kk}"
        )));
    }
    if cfg.k == 0 || cfg.k > kk {
        return Err(Error::InvalidArgument(format!(
            "judged column count k = {} must lie in 1..=K = {kk}",
            cfg.k
        )));
    }
    if !x0.is_finite() {
        return Err(Error::NonFinite("initial block".into()));
    }
    if cfg.stop.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }

    let delta = resolve_delta(op, cfg.delta)?;
    let norm_estimate = two_norm_estimate(op)?;
    if !(norm_estimate > 0.0) {
        return Err(Error::InvalidArgument(
            "operator two-norm estimate is zero; nothing to refine".into(),
        ));
    }

    let mut x = x0.clone();
    let mut history: Vec<HistoryRecord> = Vec::new();
    let mut fallback_count = 0usize;
    let mut status = RefineStatus::MaxIter;
    let mut diagnostic = None;

    for iter in 1..=cfg.stop.max_iter {
        let step = match refine_step(op, &mut x, cfg.k, delta, cfg.beta, cfg.reorth_threshold, norm_estimate) {
            Ok(s) => s,
            Err(
                e @ (Error::NearZeroRayleigh { .. }
                | Error::Y1Singular { .. }
                | Error::ZeroPivot { .. }
                | Error::RankDeficient { .. }
                | Error::NonFinite(_)),
            ) => {
                status = RefineStatus::Diverged;
                diagnostic = Some(format!("iteration {iter}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        if step.fallback {
            fallback_count += 1;
        }
        history.push(HistoryRecord {
            iter,
            rel_resid: step.rel_resid,
            corr_k: step.corr_k,
            corr_full: step.corr_full,
            min_gap: step.min_gap,
            delta_hits: step.delta_hits,
            fallback: step.fallback,
        });

        if step.corr_k <= cfg.stop.corr_tol || step.rel_resid <= cfg.stop.resid_tol {
            status = RefineStatus::Converged;
            break;
        }
        if history.len() > cfg.stop.growth_window {
            let prev = history[history.len() - 1 - cfg.stop.growth_window].corr_full;
            let cur = step.corr_full;
            if prev > 0.0 && cur > cfg.stop.corr_tol && cur >= cfg.stop.growth_factor * prev {
                status = RefineStatus::Diverged;
                diagnostic = Some(format!(
                    "correction norm grew from {prev:.3e} to {cur:.3e} over {} iterations",
                    cfg.stop.growth_window
                ));
                break;
            }
        }
    }

    // Final measurements on the block as returned.
    let w = op.apply_block(&x)?;
    let (_, dtilde) = rayleigh_quotients(&x, &w);
    let mut per_vector_resid = Vec::with_capacity(kk);
    let mut lead_sq = 0.0;
    for j in 0..kk {
        let mut s = 0.0;
        for (wi, xi) in w.col(j).iter().zip(x.col(j)) {
            let ri = wi - dtilde[j] * xi;
            s += ri * ri;
        }
        if j < cfg.k {
            lead_sq += s;
        }
        per_vector_resid.push(s.sqrt() / norm_estimate);
    }

    Ok(RefineOutcome {
        status,
        iters: history.len(),
        delta,
        norm_estimate,
        eigenvalues: dtilde,
        per_vector_resid,
        rel_resid: lead_sq.sqrt() / norm_estimate,
        fallback_count,
        diagnostic,
        history,
        xhat: x,
    })
}

/// Render history as CSV with a fixed header; floating-point fields use
/// round-trip scientific formatting, `min_gap` is empty when absent, and
/// `fallback` is 0/1.
pub fn history_csv(history: &[HistoryRecord]) -> String {
    let mut out = String::from("iter,rel_resid,corr_k,corr_full,min_gap,delta_hits,fallback\n");
    for h in history {
        let gap = h.min_gap.map(|g| format!("{g:.16e}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{},{},{}\n",
            h.iter,
            h.rel_resid,
            h.corr_k,
            h.corr_full,
            gap,
            h.delta_hits,
            u8::from(h.fallback)
        ));
    }
    out
}
