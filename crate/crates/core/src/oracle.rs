//! Independent validation tools: a cyclic Jacobi eigensolver, principal-angle
//! measurements, controlled basis perturbations, and binary32 rounding.
//!
//! Nothing in here shares code with the refinement path (beyond the storage
//! types), so agreement between the two is meaningful evidence.

use crate::error::{Error, Result};
use crate::linalg::block::{dot, VectorBlock, UNIT_ROUNDOFF};
use crate::linalg::dense::DenseSym;
use crate::linalg::rng::SplitMix64;

/// Size guard for the dense eigensolver: it is a desk-scale oracle, not a
/// production solver.
pub const JACOBI_MAX_N: usize = 2000;

/// Sweep cap for the cyclic Jacobi iteration.
pub const JACOBI_MAX_SWEEPS: usize = 30;

/// Full eigendecomposition A = V·diag(values)·Vᵀ, eigenpairs sorted by
/// descending |value| (ties broken by descending value, then input order).
#[derive(Clone, Debug)]
pub struct EigDecomp {
    pub values: Vec<f64>,
    /// Column j is the eigenvector of `values[j]`.
    pub vectors: VectorBlock,
    /// Off-diagonal Frobenius norm at exit.
    pub off_diag_residual: f64,
    /// False when the sweep cap was reached before the convergence test.
    pub converged: bool,
}

/// Cyclic-by-row Jacobi eigendecomposition. Iterates until the off-diagonal
/// Frobenius norm falls below n·u·‖A‖_F or [`JACOBI_MAX_SWEEPS`] sweeps pass
/// (reported via `converged`, not an error).
pub fn jacobi_eig(a: &DenseSym) -> Result<EigDecomp> {
    let n = crate::linalg::operator::SymmetricOperator::n(a);
    if n == 0 || n > JACOBI_MAX_N {
        return Err(Error::InvalidArgument(format!(
            "oracle eigensolver accepts 1 <= n <= {JACOBI_MAX_N}, got {n}"
        )));
    }
    let mut m = a.as_block();
    let mut v = VectorBlock::identity_cols(n, n);
    let norm_f = a.norm_fro();
    let tol = n as f64 * UNIT_ROUNDOFF * norm_f;

    let off = |m: &VectorBlock| -> f64 {
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    let x = m.at(i, j);
                    acc += x * x;
                }
            }
        }
        acc.sqrt()
    };

    let mut converged = off(&m) <= tol;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.at(p, q);
                if apq == 0.0 {
                    continue;
                }
                // Symmetric Schur rotation annihilating (p, q).
                let theta = (m.at(q, q) - m.at(p, p)) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Rows/columns p and q of M.
                for i in 0..n {
                    let (mip, miq) = (m.at(i, p), m.at(i, q));
                    m.set(i, p, c * mip - s * miq);
                    m.set(i, q, s * mip + c * miq);
                }
                for i in 0..n {
                    let (mpi, mqi) = (m.at(p, i), m.at(q, i));
                    m.set(p, i, c * mpi - s * mqi);
                    m.set(q, i, s * mpi + c * mqi);
                }
                // Accumulate the rotation into V.
                for i in 0..n {
                    let (vip, viq) = (v.at(i, p), v.at(i, q));
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
        sweeps += 1;
        converged = off(&m) <= tol;
    }

    let off_diag_residual = off(&m);
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.at(i, i)).collect();
    order.sort_by(|&a, &b| {
        diag[b]
            .abs()
            .partial_cmp(&diag[a].abs())
            .expect("finite eigenvalues")
            .then(diag[b].partial_cmp(&diag[a]).expect("finite eigenvalues"))
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let vectors = VectorBlock::from_fn(n, n, |i, j| v.at(i, order[j]));
    Ok(EigDecomp { values, vectors, off_diag_residual, converged })
}

/// Sine of the largest principal angle between the column spans of U and V
/// (blocks of equal column count). Both blocks are orthonormalized first;
/// the value is ‖(I − U₀U₀ᵀ)·V₀‖₂, computed from the k×k Gram matrix of the
/// projected block, clamped into [0, 1].
pub fn principal_angle_sin(u: &VectorBlock, v: &VectorBlock) -> Result<f64> {
    if u.nrows() != v.nrows() || u.ncols() != v.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "principal angles need equal shapes, got {}x{} vs {}x{}",
            u.nrows(),
            u.ncols(),
            v.nrows(),
            v.ncols()
        )));
    }
    let u0 = u.orthonormalize()?;
    let v0 = v.orthonormalize()?;
    // M = V₀ − U₀·(U₀ᵀV₀)
    let cross = u0.transpose_times(&v0)?;
    let mut m = v0.clone();
    m.add_scaled(&u0.matmul(&cross)?, -1.0)?;
    let g = m.gram();
    let k = g.nrows();
    let eig = jacobi_eig(&DenseSym::from_entries(k, g.data().to_vec())?)?;
    let lambda_max = eig.values.iter().fold(0.0f64, |acc, &x| acc.max(x));
    Ok(lambda_max.max(0.0).sqrt().min(1.0))
}

/// Add seeded Gaussian noise of scale `sigma_err` to every entry of X, then
/// reorthonormalize. Returns the perturbed basis together with its measured
/// principal-angle distance from X.
pub fn perturb_basis(
    x: &VectorBlock,
    sigma_err: f64,
    seed: u64,
) -> Result<(VectorBlock, f64)> {
    if !(sigma_err >= 0.0) || !sigma_err.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "perturbation scale must be finite and >= 0, got {sigma_err}"
        )));
    }
    let mut g = SplitMix64::new(seed);
    let mut p = x.clone();
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            let v = p.at(i, j) + sigma_err * g.next_normal();
            p.set(i, j, v);
        }
    }
    let p = p.orthonormalize()?;
    let measured = principal_angle_sin(x, &p)?;
    Ok((p, measured))
}

/// Round every entry to the nearest binary32 value and back. Idempotent.
/// Fails if a finite entry overflows the binary32 range.
pub fn round_binary32(b: &VectorBlock) -> Result<VectorBlock> {
    let mut out = b.clone();
    for j in 0..b.ncols() {
        for i in 0..b.nrows() {
            let x = b.at(i, j);
            let r = x as f32 as f64;
            if !r.is_finite() {
                return Err(Error::NonFinite(format!(
                    "entry ({i}, {j}) = {x} leaves the binary32 range"
                )));
            }
            out.set(i, j, r);
        }
    }
    Ok(out)
}

/// Sine of the angle between two single vectors (convenience wrapper used by
/// per-vector error measurements).
pub fn vector_angle_sin(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    let c = (dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
    (1.0 - c * c).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::generate::{gen_spectrum, random_orthogonal};
    use crate::linalg::operator::SymmetricOperator;

    #[test]
    fn jacobi_diagonal_matrix_is_immediate() {
        let a = DenseSym::from_fn(3, |i, j| if i == j { [1.0, -3.0, 2.0][i] } else { 0.0 })
            .unwrap();
        let e = jacobi_eig(&a).unwrap();
        assert!(e.converged);
        assert_eq!(e.values, vec![-3.0, 2.0, 1.0]);
        // Eigenvectors are signed coordinate axes.
        assert_eq!(e.vectors.at(1, 0).abs(), 1.0);
        assert_eq!(e.vectors.at(2, 1).abs(), 1.0);
        assert_eq!(e.vectors.at(0, 2).abs(), 1.0);
    }

    #[test]
    fn jacobi_two_by_two_hand_case() {
        // [[2, 1], [1, 2]] has eigenvalues 3 and 1.
        let a = DenseSym::from_entries(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = jacobi_eig(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() <= 4.0 * UNIT_ROUNDOFF);
        assert!((e.values[1] - 1.0).abs() <= 4.0 * UNIT_ROUNDOFF);
        let x = e.vectors.col(0);
        assert!((x[0] - x[1]).abs() <= 1e-15); // (1, 1)/√2 direction
    }

    #[test]
    fn jacobi_recovers_generated_spectrum() {
        let lambdas = [2.0, -1.5, 0.75, 0.3, -0.1];
        let (a, model, q) = gen_spectrum(&lambdas, 13).unwrap();
        let e = jacobi_eig(&a).unwrap();
        assert!(e.converged);
        let n = 5;
        for j in 0..n {
            assert!(
                (e.values[j] - model.lambdas[j]).abs() <= 100.0 * n as f64 * UNIT_ROUNDOFF,
                "value {j}"
            );
        }
        // Reconstruction and orthogonality contracts.
        let av = a.apply_block(&e.vectors).unwrap();
        let mut vl = e.vectors.clone();
        for j in 0..n {
            vl.scale_col(j, e.values[j]);
        }
        let recon = av.sub(&vl).unwrap().frobenius();
        assert!(recon <= 100.0 * n as f64 * UNIT_ROUNDOFF * a.norm_fro());
        assert!(e.vectors.gram().identity_deviation() <= 100.0 * n as f64 * UNIT_ROUNDOFF);
        // Subspace agreement with the construction basis.
        let s = principal_angle_sin(&q.columns(0, 2), &e.vectors.columns(0, 2)).unwrap();
        assert!(s <= 1e-13, "principal angle {s}");
    }

    #[test]
    fn jacobi_rejects_oversized_input() {
        let a = DenseSym::zeros(JACOBI_MAX_N + 1);
        assert!(matches!(jacobi_eig(&a), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn principal_angle_of_rotated_plane() {
        // Rotate e₂ by 0.3 rad inside the (e₂, e₃) plane: sin Θ = sin 0.3.
        let u = VectorBlock::identity_cols(4, 2);
        let th: f64 = 0.3;
        let v = VectorBlock::from_fn(4, 2, |i, j| match (i, j) {
            (0, 0) => 1.0,
            (1, 1) => th.cos(),
            (2, 1) => th.sin(),
            _ => 0.0,
        });
        let s = principal_angle_sin(&u, &v).unwrap();
        assert!((s - th.sin()).abs() <= 1e-12, "got {s}, want {}", th.sin());
    }

    #[test]
    fn principal_angle_is_symmetric_and_zero_on_self() {
        let q = random_orthogonal(20, 4);
        let u = q.columns(0, 3);
        let v = q.columns(3, 6);
        let suv = principal_angle_sin(&u, &v).unwrap();
        let svu = principal_angle_sin(&v, &u).unwrap();
        assert!((suv - svu).abs() <= 1e-12);
        assert!(principal_angle_sin(&u, &u).unwrap() <= 1e-13);
    }

    #[test]
    fn orthogonal_subspaces_have_angle_one() {
        let u = VectorBlock::identity_cols(4, 1);
        let v = VectorBlock::from_fn(4, 1, |i, _| if i == 2 { 1.0 } else { 0.0 });
        assert!((principal_angle_sin(&u, &v).unwrap() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn perturb_basis_lands_near_the_requested_scale() {
        let x = random_orthogonal(60, 3).columns(0, 3);
        let (p, measured) = perturb_basis(&x, 1e-5, 42).unwrap();
        assert!(p.gram().identity_deviation() <= 1e-12);
        assert!(measured > 1e-6 && measured < 1e-3, "measured {measured}");
        // Deterministic in the seed.
        let (p2, _) = perturb_basis(&x, 1e-5, 42).unwrap();
        assert_eq!(p, p2);
    }

    #[test]
    fn round_binary32_is_idempotent_and_quantizes() {
        let b = VectorBlock::from_raw(2, 1, vec![0.1, 1.0 + UNIT_ROUNDOFF]).unwrap();
        let r = round_binary32(&b).unwrap();
        assert_eq!(r.at(0, 0), 0.1f32 as f64);
        assert_eq!(r.at(1, 0), 1.0);
        let r2 = round_binary32(&r).unwrap();
        assert_eq!(r, r2);
    }

    #[test]
    fn round_binary32_overflow_is_an_error() {
        let b = VectorBlock::from_raw(1, 1, vec![1e39]).unwrap();
        assert!(matches!(round_binary32(&b), Err(Error::NonFinite(_))));
    }
}
