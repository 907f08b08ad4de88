//! Cluster handling: detection of near-coincident Rayleigh quotients and a
//! small dense Rayleigh–Ritz solve that rotates an almost-invariant block so
//! that its columns individually track eigenvectors again.
//!
//! When two target eigenvalues (nearly) coincide, the per-column correction
//! divides rounding noise by rounding noise and the iteration stalls. The
//! recovery is to re-diagonalize within the block: solve the projected
//! problem (XᵀAX)·s = θ·(XᵀX)·s and replace X by X·S.

use crate::error::{Error, Result};
use crate::linalg::{SymmetricOperator, VectorBlock, UNIT_ROUNDOFF};
use crate::oracle::jacobi_eig;
use crate::linalg::DenseSym;

/// Largest block width accepted by [`rayleigh_ritz`]; the projected solve is
/// a dense K×K eigendecomposition.
pub const MAX_RITZ_DIM: usize = 200;

/// Output of [`rayleigh_ritz`].
#[derive(Clone, Debug)]
pub struct RitzResult {
    /// The rotated block X·S with unit columns; column j stays associated
    /// with incoming column j (nearest Ritz value).
    pub z: VectorBlock,
    /// Ritz values, aligned with the columns of `z`.
    pub values: Vec<f64>,
    /// ‖SᵀMS − diag(values)‖_F of the projected problem — how far the
    /// rotated block is from diagonalizing the projection.
    pub offdiag: f64,
}

/// Solve the projected eigenproblem on span(X) and rotate X onto the Ritz
/// basis.
///
/// Computes G = XᵀX = LLᵀ, M = XᵀAX, the K×K eigendecomposition of
/// B = L⁻¹ML⁻ᵀ, and returns Z = X·L⁻ᵀV with unit columns. Columns are
/// permuted so that column j of Z carries the Ritz value nearest the
/// incoming Rayleigh quotient of column j (greedy in column order, ties to
/// the lower Ritz index); this keeps "the leading k columns" meaningful
/// across the preprocessing step.
///
/// Errors: `NotPositiveDefinite` when the Gram matrix has no Cholesky factor
/// (numerically dependent columns), `InvalidArgument` for shape violations
/// or K > [`MAX_RITZ_DIM`].
pub fn rayleigh_ritz(op: &dyn SymmetricOperator, x: &VectorBlock) -> Result<RitzResult> {
    let n = x.nrows();
    let kk = x.ncols();
    if n != op.n() {
        return Err(Error::DimensionMismatch(format!(
            "operator is {}x{} but the block has {} rows",
            op.n(),
            op.n(),
            n
        )));
    }
    if kk == 0 || kk > MAX_RITZ_DIM || kk > n {
        return Err(Error::InvalidArgument(format!(
            "block width must lie in 1..=min(n, {MAX_RITZ_DIM}), got {kk}"
        )));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("Rayleigh-Ritz input block".into()));
    }

    let g = x.gram();
    let l = cholesky(&g)?;
    let w = op.apply_block(x)?;
    // M = XᵀW, symmetrized (it is symmetric in exact arithmetic).
    let m_raw = x.transpose_times(&w)?;
    let mut m = vec![0.0; kk * kk];
    for j in 0..kk {
        for i in 0..kk {
            m[i + j * kk] = 0.5 * (m_raw.at(i, j) + m_raw.at(j, i));
        }
    }

    // B = L⁻¹ M L⁻ᵀ, formed as forward-solve, transpose, forward-solve.
    let mut b = m;
    forward_solve_all(&l, kk, &mut b);
    transpose_square(kk, &mut b);
    forward_solve_all(&l, kk, &mut b);
    let eig = jacobi_eig(&DenseSym::from_entries(kk, b)?)?;

    // S = L⁻ᵀ V, then Z = X·S with unit columns.
    let mut s = eig.vectors.data().to_vec();
    backward_solve_all(&l, kk, &mut s);
    let s_block = VectorBlock::from_raw(kk, kk, s)?;
    let mut z = x.matmul(&s_block)?;
    z.normalize_columns()?;

    // Projected off-diagonal residual: SᵀMS − diag(θ), using the already
    // symmetrized M (recompute M·S then Sᵀ·(M·S)).
    let ms = {
        let m_block = {
            let mut md = vec![0.0; kk * kk];
            for j in 0..kk {
                for i in 0..kk {
                    md[i + j * kk] = 0.5 * (m_raw.at(i, j) + m_raw.at(j, i));
                }
            }
            VectorBlock::from_raw(kk, kk, md)?
        };
        m_block.matmul(&s_block)?
    };
    let sms = s_block.transpose_times(&ms)?;
    let mut offdiag = 0.0f64;
    for j in 0..kk {
        for i in 0..kk {
            let target = if i == j { eig.values[j] } else { 0.0 };
            let d = sms.at(i, j) - target;
            offdiag += d * d;
        }
    }
    let offdiag = offdiag.sqrt();

    // Match Ritz columns to incoming columns by nearest Rayleigh quotient.
    let incoming: Vec<f64> = (0..kk)
        .map(|j| crate::linalg::dot(x.col(j), w.col(j)) / g.at(j, j))
        .collect();
    let perm = nearest_value_matching(&incoming, &eig.values);

    let mut z_out = VectorBlock::zeros(n, kk);
    let mut values = vec![0.0; kk];
    for (j, &src) in perm.iter().enumerate() {
        z_out.col_mut(j).copy_from_slice(z.col(src));
        values[j] = eig.values[src];
    }
    Ok(RitzResult { z: z_out, values, offdiag })
}

/// Greedy nearest-value assignment: processes `targets` in order; each picks
/// the unused entry of `pool` minimizing |pool − target| (ties to the lower
/// pool index). Returns `perm` with `perm[j]` = pool index chosen for j.
fn nearest_value_matching(targets: &[f64], pool: &[f64]) -> Vec<usize> {
    let kk = targets.len();
    let mut used = vec![false; kk];
    let mut perm = vec![0usize; kk];
    for (j, &t) in targets.iter().enumerate() {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (l, &p) in pool.iter().enumerate() {
            if used[l] {
                continue;
            }
            let d = (p - t).abs();
            if d < best_d {
                best_d = d;
                best = l;
            }
        }
        used[best] = true;
        perm[j] = best;
    }
    perm
}

/// Cholesky G = LLᵀ of a K×K Gram block. Pivots at or below K·u·max(g_jj)
/// are treated as loss of positive definiteness.
fn cholesky(g: &VectorBlock) -> Result<Vec<f64>> {
    let kk = g.ncols();
    let floor = {
        let mut dmax = 0.0f64;
        for j in 0..kk {
            dmax = dmax.max(g.at(j, j).abs());
        }
        kk as f64 * UNIT_ROUNDOFF * dmax
    };
    let mut l = vec![0.0; kk * kk];
    for j in 0..kk {
        for i in j..kk {
            let mut sum = g.at(i, j);
            for p in 0..j {
                sum -= l[i + p * kk] * l[j + p * kk];
            }
            if i == j {
                if !(sum > floor) {
                    return Err(Error::NotPositiveDefinite { column: j, pivot: sum });
                }
                l[j + j * kk] = sum.sqrt();
            } else {
                l[i + j * kk] = sum / l[j + j * kk];
            }
        }
    }
    Ok(l)
}

/// Overwrite the K×K column-major matrix `b` with L⁻¹·b.
fn forward_solve_all(l: &[f64], kk: usize, b: &mut [f64]) {
    for c in 0..kk {
        let col = &mut b[c * kk..(c + 1) * kk];
        for i in 0..kk {
            let mut v = col[i];
            for p in 0..i {
                v -= l[i + p * kk] * col[p];
            }
            col[i] = v / l[i + i * kk];
        }
    }
}

/// Overwrite the K×K column-major matrix `b` with L⁻ᵀ·b.
fn backward_solve_all(l: &[f64], kk: usize, b: &mut [f64]) {
    for c in 0..kk {
        let col = &mut b[c * kk..(c + 1) * kk];
        for i in (0..kk).rev() {
            let mut v = col[i];
            for p in i + 1..kk {
                v -= l[p + i * kk] * col[p];
            }
            col[i] = v / l[i + i * kk];
        }
    }
}

fn transpose_square(kk: usize, b: &mut [f64]) {
    for j in 0..kk {
        for i in 0..j {
            b.swap(i + j * kk, j + i * kk);
        }
    }
}

/// Group indices whose values chain together within `delta`: sort by value,
/// link consecutive entries with gap ≤ delta, and return each connected
/// group of size ≥ 2 as a sorted index list (groups ordered by their
/// smallest value). This is the transitive closure of the pairwise
/// |vᵢ − vⱼ| ≤ delta relation on the line.
pub fn detect_clusters(values: &[f64], delta: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut groups = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for (pos, &idx) in order.iter().enumerate() {
        if pos > 0 {
            let prev = order[pos - 1];
            let gap = values[idx] - values[prev];
            if !(gap <= delta && gap.is_finite()) {
                if current.len() >= 2 {
                    current.sort_unstable();
                    groups.push(std::mem::take(&mut current));
                } else {
                    current.clear();
                }
            }
        }
        current.push(idx);
    }
    if current.len() >= 2 {
        current.sort_unstable();
        groups.push(current);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gen_spectrum, SplitMix64};
    use crate::oracle::vector_angle_sin;

    fn rotate_pair(x: &VectorBlock, a: usize, b: usize, theta: f64) -> VectorBlock {
        let (c, s) = (theta.cos(), theta.sin());
        let mut out = x.clone();
        for i in 0..x.nrows() {
            let (va, vb) = (x.at(i, a), x.at(i, b));
            out.set(i, a, c * va + s * vb);
            out.set(i, b, -s * va + c * vb);
        }
        out
    }

    #[test]
    fn recovers_eigenvectors_from_a_rotated_invariant_block() {
        let lambdas = vec![2.0, 1.0, 0.5, 0.1, 0.05, 0.02];
        let (a, _, basis) = gen_spectrum(&lambdas, 901).unwrap();
        let x = rotate_pair(&basis.columns(0, 3), 0, 1, 0.7);
        let r = rayleigh_ritz(&a, &x).unwrap();
        assert!(
            r.z.gram().identity_deviation() <= 1e-10,
            "orthogonality {}",
            r.z.gram().identity_deviation()
        );
        for j in 0..3 {
            assert!((r.values[j] - lambdas[j]).abs() <= 1e-10, "value {j}: {}", r.values[j]);
            let s = vector_angle_sin(r.z.col(j), basis.col(j));
            assert!(s <= 1e-9, "column {j} angle {s}");
        }
        assert!(r.offdiag <= 1e-10, "offdiag {}", r.offdiag);
    }

    #[test]
    fn ritz_block_diagonalizes_the_projection() {
        let lambdas = vec![3.0, 2.9, 1.0, 0.4, 0.2, 0.1, 0.05, 0.01];
        let (a, _, basis) = gen_spectrum(&lambdas, 902).unwrap();
        // A noisy non-orthonormal block spanning roughly the leading 4.
        let mut rng = SplitMix64::new(17);
        let mut x = basis.columns(0, 4);
        for j in 0..4 {
            for i in 0..x.nrows() {
                let v = x.at(i, j) * (1.0 + 1e-3 * rng.next_normal());
                x.set(i, j, v + 1e-4 * rng.next_normal());
            }
            x.scale_col(j, 1.0 + 0.3 * j as f64); // de-normalize deliberately
        }
        let r = rayleigh_ritz(&a, &x).unwrap();
        assert!(r.z.gram().identity_deviation() <= 1e-12);
        // ZᵀAZ should be diagonal to within the projected residual scale.
        let az = a.apply_block(&r.z).unwrap();
        let zaz = r.z.transpose_times(&az).unwrap();
        for j in 0..4 {
            for i in 0..4 {
                if i != j {
                    assert!(zaz.at(i, j).abs() <= 1e-8, "offdiag ({i},{j}) = {}", zaz.at(i, j));
                }
            }
            assert!((zaz.at(j, j) - r.values[j]).abs() <= 1e-10);
        }
    }

    #[test]
    fn column_association_survives_reordering() {
        let lambdas = vec![1.0, 0.7, 0.4, 0.2, 0.1];
        let (a, _, basis) = gen_spectrum(&lambdas, 903).unwrap();
        // Feed columns in ascending-eigenvalue order; the output must keep
        // that order rather than resorting to descending.
        let mut x = VectorBlock::zeros(basis.nrows(), 3);
        x.col_mut(0).copy_from_slice(basis.col(2)); // 0.4
        x.col_mut(1).copy_from_slice(basis.col(1)); // 0.7
        x.col_mut(2).copy_from_slice(basis.col(0)); // 1.0
        let r = rayleigh_ritz(&a, &x).unwrap();
        assert!((r.values[0] - 0.4).abs() <= 1e-10);
        assert!((r.values[1] - 0.7).abs() <= 1e-10);
        assert!((r.values[2] - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn duplicated_column_is_rejected_as_not_positive_definite() {
        let lambdas = vec![1.0, 0.5, 0.25, 0.1];
        let (a, _, basis) = gen_spectrum(&lambdas, 904).unwrap();
        let mut x = basis.columns(0, 2);
        let c0 = x.col(0).to_vec();
        x.col_mut(1).copy_from_slice(&c0);
        match rayleigh_ritz(&a, &x) {
            Err(Error::NotPositiveDefinite { column, .. }) => assert_eq!(column, 1),
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn width_guard() {
        let lambdas: Vec<f64> = (0..8).map(|i| 1.0 / (1 << i) as f64).collect();
        let (a, _, basis) = gen_spectrum(&lambdas, 905).unwrap();
        let err = rayleigh_ritz(&a, &basis.columns(0, 0).clone()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
        // Width above n is impossible to build here; the MAX_RITZ_DIM guard
        // shares the same branch and message.
        let msg = err.to_string();
        assert!(msg.contains("block width"), "{msg}");
    }

    #[test]
    fn detect_clusters_chains_transitively() {
        let d = 1e-6;
        // 0, d, 2d chain into one group even though |0 - 2d| > d.
        let groups = detect_clusters(&[0.0, d, 2.0 * d, 1.0], d);
        assert_eq!(groups, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn detect_clusters_boundary_and_order() {
        // Exactly-delta gaps count; groups are reported by ascending value
        // with indices sorted; singletons are omitted.
        let groups = detect_clusters(&[5.0, 1.0, 1.0 + 1e-8, 3.0, 3.0], 1e-8);
        assert_eq!(groups, vec![vec![1, 2], vec![3, 4]]);
        assert!(detect_clusters(&[1.0, 2.0, 3.0], 0.5).is_empty());
        // Exact ties always chain, even with delta = 0.
        assert_eq!(detect_clusters(&[2.0, 2.0], 0.0), vec![vec![0, 1]]);
    }
}
