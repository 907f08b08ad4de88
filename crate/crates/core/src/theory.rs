//! Convergence-theory diagnostics: the ε-dependent constants χ, η, ω, the
//! separation ratio γ, the per-target contraction bound, and the closed-form
//! sufficient-separation threshold α(ρ₁, ρ₂).
//!
//! These functions compute the *predicted* behavior of the refinement
//! iteration; the test suite compares them against measured behavior.

use serde::Serialize;

use crate::error::{Error, Result};

/// χ(ε) = (3 − 2ε) / (1 − ε)². χ(0) = 3; χ is increasing and stays below
/// 3.05 for ε ≤ 1/100.
pub fn chi(eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok((3.0 - 2.0 * eps) / ((1.0 - eps) * (1.0 - eps)))
}

/// η(ε) = 2(1 + 2ε + χε²)χ / ((1 − ε)(1 − 2ε − χε²)). η(0) = 6; below 7 for
/// ε ≤ 1/100. Defined while 1 − 2ε − χ(ε)ε² > 0 (up to ε ≈ 0.29).
pub fn eta(eps: f64) -> Result<f64> {
    let c = chi(eps)?;
    let denom = (1.0 - eps) * (1.0 - 2.0 * eps - c * eps * eps);
    if denom <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "eta is undefined at epsilon = {eps}: 1 - 2eps - chi*eps^2 must be positive"
        )));
    }
    Ok(2.0 * (1.0 + 2.0 * eps + c * eps * eps) * c / denom)
}

/// ω(ε) = 2χ + 2ηε + χηε². ω(0) = 6; below 6.4 for ε ≤ 1/100.
pub fn omega(eps: f64) -> Result<f64> {
    let c = chi(eps)?;
    let h = eta(eps)?;
    Ok(2.0 * c + 2.0 * h * eps + c * h * eps * eps)
}

fn check_eps(eps: f64) -> Result<()> {
    if !eps.is_finite() || !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in [0, 1), got {eps}"
        )));
    }
    Ok(())
}

/// Separation ratio γ = max_{i>k} |λ_i| / min_{j≤k} |λ_j| under the
/// descending-|λ| ordering. The iteration can only contract when γ < 1;
/// γ = 0 when k = n. Errors when the smallest target eigenvalue is zero.
pub fn gamma(lambdas: &[f64], k: usize) -> Result<f64> {
    let sorted = sorted_desc_abs(lambdas)?;
    let n = sorted.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k must lie in 1..={n}, got {k}"
        )));
    }
    let min_target = sorted[k - 1].abs();
    if min_target == 0.0 {
        return Err(Error::InvalidArgument(
            "smallest target eigenvalue is zero; the separation ratio is undefined".into(),
        ));
    }
    let max_tail = if k == n { 0.0 } else { sorted[k].abs() };
    Ok(max_tail / min_target)
}

fn sorted_desc_abs(lambdas: &[f64]) -> Result<Vec<f64>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("spectrum must be nonempty".into()));
    }
    if let Some(bad) = lambdas.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("eigenvalue {bad}")));
    }
    let mut s = lambdas.to_vec();
    s.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).expect("finite"));
    Ok(s)
}

/// Inputs of [`contraction_bound`].
#[derive(Clone, Debug)]
pub struct BoundParams {
    /// Basis error ε of the approximate WY factor (‖E‖₂ with Ĥ(I+E) = H).
    pub epsilon: f64,
    /// ‖A‖₂ (an estimate or upper bound).
    pub norm_a: f64,
    /// Spectrum, any order; sorted by descending magnitude internally.
    pub lambdas: Vec<f64>,
    /// Number of target eigenpairs (leading k under the sorted order).
    pub k: usize,
    /// Which target the bound is for (0-based, `j < k`).
    pub j: usize,
}

/// One evaluation of the per-target error-transfer bound.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ContractionBound {
    /// The bound on ‖x_j − x̃_j‖ / ‖X − X̂‖ after one step.
    pub bound: f64,
    /// Admissibility limit √(min-gap / (2ηk‖A‖)); infinite when k = 1.
    pub eps_limit_gap: f64,
    /// Admissibility limit √(|λ_j| / (η‖A‖)).
    pub eps_limit_abs: f64,
    /// min_{i≤k, i≠j} |λ_j − λ_i| over the targets; infinite when k = 1.
    pub min_gap: f64,
    /// max_{i>k} |λ_i|.
    pub tail_max: f64,
}

/// One-step error-transfer bound for target j:
///
/// (1/(1−2ε)) · [ ω√k‖A‖ε / (gap_j − 2η‖A‖ε²)
///              + (max_{i>k}|λ_i| + ω‖A‖ε) / (|λ_j| − η‖A‖ε²) ]
///
/// valid for ε up to min(√(gap_j/(2ηk‖A‖)), √(|λ_j|/(η‖A‖))). The k = 1 case
/// has no within-target gap, so the first term vanishes. Errors name the
/// violated admissibility branch.
pub fn contraction_bound(p: &BoundParams) -> Result<ContractionBound> {
    let sorted = sorted_desc_abs(&p.lambdas)?;
    let n = sorted.len();
    if p.k == 0 || p.k > n {
        return Err(Error::InvalidArgument(format!("k must lie in 1..={n}, got {}", p.k)));
    }
    if p.j >= p.k {
        return Err(Error::InvalidArgument(format!(
            "target index j = {} must be below k = {}",
            p.j, p.k
        )));
    }
    if !(p.norm_a > 0.0) || !p.norm_a.is_finite() {
        return Err(Error::InvalidArgument(format!("norm_a must be positive, got {}", p.norm_a)));
    }
    let eps = p.epsilon;
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {eps}")));
    }
    let h = eta(eps)?;
    let w = omega(eps)?;
    let lam_j = sorted[p.j].abs();
    let min_gap = (0..p.k)
        .filter(|&i| i != p.j)
        .map(|i| (sorted[p.j] - sorted[i]).abs())
        .fold(f64::INFINITY, f64::min);
    let tail_max = if p.k == n { 0.0 } else { sorted[p.k].abs() };

    let eps_limit_gap = if min_gap.is_finite() {
        (min_gap / (2.0 * h * p.k as f64 * p.norm_a)).sqrt()
    } else {
        f64::INFINITY
    };
    let eps_limit_abs = (lam_j / (h * p.norm_a)).sqrt();
    if eps > eps_limit_gap {
        return Err(Error::InvalidArgument(format!(
            "epsilon = {eps:.3e} exceeds the within-target-gap admissibility limit {eps_limit_gap:.3e}"
        )));
    }
    if eps > eps_limit_abs {
        return Err(Error::InvalidArgument(format!(
            "epsilon = {eps:.3e} exceeds the target-magnitude admissibility limit {eps_limit_abs:.3e}"
        )));
    }

    let abs_denom = lam_j - h * p.norm_a * eps * eps;
    if abs_denom <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "target-magnitude denominator |lambda_j| - eta*||A||*eps^2 = {abs_denom:.3e} is not positive"
        )));
    }
    let first = if min_gap.is_finite() {
        let gap_denom = min_gap - 2.0 * h * p.norm_a * eps * eps;
        if gap_denom <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "gap denominator min-gap - 2*eta*||A||*eps^2 = {gap_denom:.3e} is not positive"
            )));
        }
        w * (p.k as f64).sqrt() * p.norm_a * eps / gap_denom
    } else {
        0.0
    };
    let second = (tail_max + w * p.norm_a * eps) / abs_denom;
    let bound = (first + second) / (1.0 - 2.0 * eps);
    Ok(ContractionBound { bound, eps_limit_gap, eps_limit_abs, min_gap, tail_max })
}

/// Closed-form sufficient separation threshold
///
///   α(ρ₁, ρ₂) = ((ρ₂² − 1)/ρ₂²)·(98/100 − 46/(ρ₁² − 1)) − 92/ρ₂²,
///
/// where ρ₁ scales ε against the within-target gap and ρ₂ against the
/// smallest target magnitude. If γ ≤ α(ρ₁, ρ₂) (and ε < 1/100), one step
/// contracts every target error. α is increasing in both arguments and tends
/// to 98/100 as ρ₁, ρ₂ → ∞. Requires ρ₁ > 1 and ρ₂ > 0.
pub fn alpha_sufficient(rho1: f64, rho2: f64) -> Result<f64> {
    if !(rho1 > 1.0) || !rho1.is_finite() {
        return Err(Error::InvalidArgument(format!("rho1 must exceed 1, got {rho1}")));
    }
    if !(rho2 > 0.0) || !rho2.is_finite() {
        return Err(Error::InvalidArgument(format!("rho2 must be positive, got {rho2}")));
    }
    let r1s = rho1 * rho1;
    let r2s = rho2 * rho2;
    Ok((r2s - 1.0) / r2s * (98.0 / 100.0 - 46.0 / (r1s - 1.0)) - 92.0 / r2s)
}

/// The ρ values of the reference α grid.
pub const ALPHA_RHO_GRID: [f64; 4] = [10.0, 100.0, 1000.0, 10000.0];

/// α(ρ₁, ρ₂) over the reference grid, as (ρ₁, ρ₂, α) rows in row-major
/// (ρ₁-major) order.
pub fn alpha_grid() -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(16);
    for &r1 in &ALPHA_RHO_GRID {
        for &r2 in &ALPHA_RHO_GRID {
            out.push((r1, r2, alpha_sufficient(r1, r2).expect("grid values are in domain")));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_at_zero() {
        assert_eq!(chi(0.0).unwrap(), 3.0);
        assert_eq!(eta(0.0).unwrap(), 6.0);
        assert_eq!(omega(0.0).unwrap(), 6.0);
    }

    #[test]
    fn constants_at_one_percent_match_independent_evaluation() {
        // Re-derive with independently written arithmetic.
        let e: f64 = 0.01;
        let c_ref = (3.0 - 0.02) / (0.99 * 0.99);
        let h_ref = 2.0 * (1.0 + 0.02 + c_ref * 1e-4) * c_ref / (0.99 * (1.0 - 0.02 - c_ref * 1e-4));
        let w_ref = 2.0 * c_ref + 2.0 * h_ref * e + c_ref * h_ref * e * e;
        let (c, h, w) = (chi(e).unwrap(), eta(e).unwrap(), omega(e).unwrap());
        assert!((c - c_ref).abs() <= 1e-12 * c_ref);
        assert!((h - h_ref).abs() <= 1e-12 * h_ref);
        assert!((w - w_ref).abs() <= 1e-12 * w_ref);
        // Regime bounds for eps <= 1/100.
        assert!(c < 3.05, "chi {c}");
        assert!(h < 7.0, "eta {h}");
        assert!(w < 6.4, "omega {w}");
    }

    #[test]
    fn constants_are_increasing_on_the_small_eps_range() {
        let mut prev = (chi(0.0).unwrap(), eta(0.0).unwrap(), omega(0.0).unwrap());
        for i in 1..=20 {
            let e = i as f64 * 0.001;
            let cur = (chi(e).unwrap(), eta(e).unwrap(), omega(e).unwrap());
            assert!(cur.0 >= prev.0 && cur.1 >= prev.1 && cur.2 >= prev.2, "at eps = {e}");
            prev = cur;
        }
    }

    #[test]
    fn eta_domain_boundary() {
        assert!(eta(0.28).is_ok());
        assert!(eta(0.30).is_err());
        assert!(chi(1.0).is_err());
        assert!(chi(-0.1).is_err());
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma(&[1.0, 0.5, 0.25, 0.125], 2).unwrap(), 0.5);
        // k = n − 1 with a zero trailing eigenvalue: fully separated.
        assert_eq!(gamma(&[1.0, 0.5, 0.0], 2).unwrap(), 0.0);
        // k = n: nothing outside the targets.
        assert_eq!(gamma(&[1.0, 0.5], 2).unwrap(), 0.0);
        // Zero target magnitude is undefined.
        assert!(gamma(&[1.0, 0.0, 0.0], 2).is_err());
        // Ordering is by magnitude, not value.
        assert_eq!(gamma(&[-1.0, 0.25, 0.5], 1).unwrap(), 0.5);
    }

    #[test]
    fn bound_reduces_to_the_separation_ratio_as_eps_vanishes() {
        let p = BoundParams {
            epsilon: 1e-6,
            norm_a: 1.0,
            lambdas: vec![1.0, 0.5, 0.25, 0.125],
            k: 2,
            j: 0,
        };
        let b = contraction_bound(&p).unwrap();
        // Expected ≈ γ_j = 0.25/1.0 plus O(1e-5) epsilon terms.
        assert!(b.bound > 0.25 && b.bound < 0.2502, "bound {}", b.bound);
        assert_eq!(b.min_gap, 0.5);
        assert_eq!(b.tail_max, 0.25);
    }

    #[test]
    fn bound_single_target_drops_the_gap_term() {
        let p = BoundParams {
            epsilon: 1e-8,
            norm_a: 1.0,
            lambdas: vec![1.0, 0.25],
            k: 1,
            j: 0,
        };
        let b = contraction_bound(&p).unwrap();
        assert!(b.eps_limit_gap.is_infinite());
        assert!((b.bound - 0.25).abs() < 1e-6, "bound {}", b.bound);
    }

    #[test]
    fn bound_rejects_inadmissible_eps() {
        let p = BoundParams {
            epsilon: 0.2,
            norm_a: 1.0,
            lambdas: vec![1.0, 0.99, 0.25],
            k: 2,
            j: 0,
        };
        let err = contraction_bound(&p).unwrap_err();
        assert!(err.to_string().contains("admissibility"), "{err}");
    }

    #[test]
    fn alpha_reference_grid_to_four_decimals() {
        // Reference values on the standard grid; the (10, 10) entry is the
        // closed-form value −0.4098.
        let reference = [
            [-0.4098, 0.5061, 0.5153, 0.5154],
            [0.0456, 0.9661, 0.9753, 0.9754],
            [0.0502, 0.9707, 0.9799, 0.9800],
            [0.0502, 0.9707, 0.9799, 0.9800],
        ];
        for (i, &r1) in ALPHA_RHO_GRID.iter().enumerate() {
            for (j, &r2) in ALPHA_RHO_GRID.iter().enumerate() {
                let a = alpha_sufficient(r1, r2).unwrap();
                assert!(
                    (a - reference[i][j]).abs() <= 5e-5,
                    "alpha({r1}, {r2}) = {a}, reference {}",
                    reference[i][j]
                );
            }
        }
    }

    #[test]
    fn alpha_limit_is_ninety_eight_percent() {
        let a = alpha_sufficient(1e6, 1e6).unwrap();
        assert!((a - 0.98).abs() <= 1e-9, "limit {a}");
    }

    #[test]
    fn alpha_domain_errors() {
        assert!(alpha_sufficient(1.0, 10.0).is_err());
        assert!(alpha_sufficient(10.0, 0.0).is_err());
        assert!(alpha_sufficient(f64::NAN, 10.0).is_err());
    }

    #[test]
    fn alpha_grid_is_complete_and_monotone() {
        let g = alpha_grid();
        assert_eq!(g.len(), 16);
        // Increasing in rho2 along each rho1 row.
        for row in g.chunks(4) {
            for w in row.windows(2) {
                assert!(w[1].2 >= w[0].2);
            }
        }
    }
}
