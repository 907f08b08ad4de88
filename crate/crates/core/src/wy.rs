//! Compact WY representation of the orthogonal map carrying the leading
//! coordinate axes onto an (approximately) orthonormal block Q.
//!
//! For an n×k block Q with Y = Q − I_{n,k} and T = −Y₁⁻ᵀ (Y₁ the leading
//! k×k block of Y), the matrix H = I − Y·T·Yᵀ is orthogonal whenever Q has
//! exactly orthonormal columns, and satisfies H·I_{n,k} = Q. When Y₁ is
//! singular or nearly so, a shifted LU factorization Q − Σ = Y·U (Σ a
//! diagonal of ±1 signs) provides the alternative T = −U·Σ·Y₁⁻ᵀ, for which
//! H·I_{n,k} = Q·Σ — the caller absorbs the sign flips.
//!
//! H is never materialized: products against H and Hᵀ cost two n×k block
//! products plus k×k work, and nothing Θ(n²) is ever allocated.

use crate::error::{Error, Result};
use crate::linalg::block::{VectorBlock, UNIT_ROUNDOFF};

/// Compact WY factor of H = I − Y·T·Yᵀ.
#[derive(Clone, Debug)]
pub struct WYFactor {
    n: usize,
    k: usize,
    y: VectorBlock,
    t: VectorBlock,
    /// Diagonal signs Σ from the LU-based construction (all +1 otherwise).
    sigma: Vec<f64>,
}

impl WYFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn y(&self) -> &VectorBlock {
        &self.y
    }

    pub fn t(&self) -> &VectorBlock {
        &self.t
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// H·B without forming H: B − Y·(T·(Yᵀ·B)).
    pub fn apply_h(&self, b: &VectorBlock) -> Result<VectorBlock> {
        self.apply_impl(b, false)
    }

    /// Hᵀ·B without forming H: B − Y·(Tᵀ·(Yᵀ·B)).
    pub fn apply_ht(&self, b: &VectorBlock) -> Result<VectorBlock> {
        self.apply_impl(b, true)
    }

    fn apply_impl(&self, b: &VectorBlock, transpose_t: bool) -> Result<VectorBlock> {
        if b.nrows() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "apply_h: factor is {}x{}, block is {}x{}",
                self.n,
                self.k,
                b.nrows(),
                b.ncols()
            )));
        }
        let z = self.y.transpose_times(b)?; // k×m
        let w = if transpose_t { self.t.transpose_times(&z)? } else { self.t.matmul(&z)? };
        let mut out = b.clone();
        out.add_scaled(&self.y.matmul(&w)?, -1.0)?;
        Ok(out)
    }

    /// The image H·I_{n,k} (equals Q for [`compact_wy`], Q·Σ for
    /// [`compact_wy_lu`]).
    pub fn reconstruct_targets(&self) -> VectorBlock {
        self.apply_h(&VectorBlock::identity_cols(self.n, self.k))
            .expect("identity block always matches the factor shape")
    }

    /// ‖HᵀH − I‖_F, evaluated through the algebraic identity
    /// HᵀH − I = Y·(TᵀGT − T − Tᵀ)·Yᵀ with G = YᵀY, entirely in k×k space.
    pub fn orthogonality_defect(&self) -> f64 {
        let g = self.y.gram();
        let tg = self.t.transpose_times(&g).expect("k x k shapes"); // Tᵀ·G
        let mut m = tg.matmul(&self.t).expect("k x k shapes"); // Tᵀ·G·T
        for j in 0..self.k {
            for i in 0..self.k {
                let v = m.at(i, j) - self.t.at(i, j) - self.t.at(j, i);
                m.set(i, j, v);
            }
        }
        // ‖Y·M·Yᵀ‖_F² = tr(M·G·Mᵀ·G)
        let mg = m.matmul(&g).expect("k x k shapes");
        let mtg = m.transpose_times(&g).expect("k x k shapes");
        let mut tr = 0.0;
        for j in 0..self.k {
            for i in 0..self.k {
                tr += mg.at(i, j) * mtg.at(j, i);
            }
        }
        tr.max(0.0).sqrt()
    }
}

fn check_block_shape(q: &VectorBlock) -> Result<(usize, usize)> {
    let (n, k) = (q.nrows(), q.ncols());
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "block must be tall with at least one column, got {n}x{k}"
        )));
    }
    Ok((n, k))
}

/// Direct compact WY construction: Y = Q − I_{n,k}, T = −Y₁⁻ᵀ.
///
/// Q must have (near-)orthonormal columns for H to be (near-)orthogonal.
/// Fails with [`Error::Y1Singular`] when the leading block of Y is singular
/// to working precision — e.g. Q = I_{n,k} itself — in which case
/// [`compact_wy_lu`] applies.
pub fn compact_wy(q: &VectorBlock) -> Result<WYFactor> {
    let (n, k) = check_block_shape(q)?;
    let mut y = q.clone();
    for j in 0..k {
        let v = y.at(j, j) - 1.0;
        y.set(j, j, v);
    }
    let y1 = top_block(&y, k);
    let lu = LuFactors::factor(&y1)?;
    // Tᵀ = −Y₁⁻¹, column by column.
    let mut t = VectorBlock::zeros(k, k);
    let mut e = vec![0.0; k];
    for j in 0..k {
        e[j] = -1.0;
        let x = lu.solve(&e);
        e[j] = 0.0;
        for i in 0..k {
            t.set(j, i, x[i]); // transpose while writing
        }
    }
    Ok(WYFactor { n, k, y, t, sigma: vec![1.0; k] })
}

/// Shifted LU factorization Q − Σ = Y·U with Σ = diag(σ_j), σ_j = −sign(q_jj)
/// (sign(0) = +1, so σ_j = −1 there). Y is unit lower trapezoidal, U upper
/// triangular. For Q with orthonormal columns every shifted pivot satisfies
/// |q_jj − σ_j| ≥ 1, so the factorization needs no pivoting.
pub fn modified_lu(q: &VectorBlock) -> Result<(VectorBlock, VectorBlock, Vec<f64>)> {
    let (n, k) = check_block_shape(q)?;
    let mut l = q.clone();
    let mut sigma = Vec::with_capacity(k);
    for j in 0..k {
        let d = l.at(j, j);
        let s = if d >= 0.0 { -1.0 } else { 1.0 };
        sigma.push(s);
        let pivot = d - s;
        if pivot == 0.0 {
            return Err(Error::ZeroPivot { column: j });
        }
        l.set(j, j, pivot);
        for i in j + 1..n {
            let v = l.at(i, j) / pivot;
            l.set(i, j, v);
        }
        for c in j + 1..k {
            let s = l.at(j, c);
            if s == 0.0 {
                continue;
            }
            for i in j + 1..n {
                let v = l.at(i, c) - l.at(i, j) * s;
                l.set(i, c, v);
            }
        }
    }
    let mut y = VectorBlock::zeros(n, k);
    let mut u = VectorBlock::zeros(k, k);
    for j in 0..k {
        y.set(j, j, 1.0);
        for i in j + 1..n {
            y.set(i, j, l.at(i, j));
        }
        for i in 0..=j {
            u.set(i, j, l.at(i, j));
        }
    }
    Ok((y, u, sigma))
}

/// LU-based compact WY construction: T = −U·Σ·Y₁⁻ᵀ with (Y, U, Σ) from
/// [`modified_lu`]. The resulting H satisfies H·I_{n,k} = Q·Σ.
pub fn compact_wy_lu(q: &VectorBlock) -> Result<WYFactor> {
    let (n, k) = check_block_shape(q)?;
    let (y, u, sigma) = modified_lu(q)?;
    // C = U·Σ scales column c of U by σ_c.
    let mut c = u;
    for (col, &s) in sigma.iter().enumerate() {
        c.scale_col(col, s);
    }
    // Solve T·Y₁ᵀ = −C by a forward sweep over columns: Y₁ is unit lower
    // triangular, so column c of the product is T(:,c) + Σ_{l<c} Y₁(c,l)·T(:,l).
    let y1 = top_block(&y, k);
    let mut t = VectorBlock::zeros(k, k);
    for col in 0..k {
        let mut acc: Vec<f64> = c.col(col).iter().map(|v| -v).collect();
        for l in 0..col {
            let w = y1.at(col, l);
            if w == 0.0 {
                continue;
            }
            let tl = t.col(l);
            for i in 0..k {
                acc[i] -= w * tl[i];
            }
        }
        t.col_mut(col).copy_from_slice(&acc);
    }
    Ok(WYFactor { n, k, y, t, sigma })
}

/// The construction chain the refinement loop uses: try [`compact_wy`], fall
/// back to [`compact_wy_lu`] when the leading block is singular. The flag
/// reports whether the fallback (and hence a Σ sign convention) was used.
pub fn factor_with_fallback(q: &VectorBlock) -> Result<(WYFactor, bool)> {
    match compact_wy(q) {
        Ok(f) => Ok((f, false)),
        Err(Error::Y1Singular { .. }) => Ok((compact_wy_lu(q)?, true)),
        Err(e) => Err(e),
    }
}

fn top_block(y: &VectorBlock, k: usize) -> VectorBlock {
    VectorBlock::from_fn(k, k, |i, j| y.at(i, j))
}

/// Dense LU with partial pivoting for the k×k leading-block solves. Flags
/// singularity when a pivot falls below k·u·‖A‖_∞.
struct LuFactors {
    k: usize,
    lu: VectorBlock,
    perm: Vec<usize>,
}

impl LuFactors {
    fn factor(a: &VectorBlock) -> Result<Self> {
        let k = a.nrows();
        debug_assert_eq!(k, a.ncols());
        let mut row_sum_max: f64 = 0.0;
        for i in 0..k {
            let s: f64 = (0..k).map(|j| a.at(i, j).abs()).sum();
            row_sum_max = row_sum_max.max(s);
        }
        let tol = k as f64 * UNIT_ROUNDOFF * row_sum_max;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..k).collect();
        for j in 0..k {
            let (mut best_row, mut best_val) = (j, lu.at(j, j).abs());
            for i in j + 1..k {
                let v = lu.at(i, j).abs();
                if v > best_val {
                    best_row = i;
                    best_val = v;
                }
            }
            if best_val <= tol {
                return Err(Error::Y1Singular { column: j, pivot: best_val });
            }
            if best_row != j {
                perm.swap(j, best_row);
                for c in 0..k {
                    let (a, b) = (lu.at(j, c), lu.at(best_row, c));
                    lu.set(j, c, b);
                    lu.set(best_row, c, a);
                }
            }
            let pivot = lu.at(j, j);
            for i in j + 1..k {
                let m = lu.at(i, j) / pivot;
                lu.set(i, j, m);
                if m == 0.0 {
                    continue;
                }
                for c in j + 1..k {
                    let v = lu.at(i, c) - m * lu.at(j, c);
                    lu.set(i, c, v);
                }
            }
        }
        Ok(Self { k, lu, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..k {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for i in j + 1..k {
                x[i] -= self.lu.at(i, j) * xj;
            }
        }
        for j in (0..k).rev() {
            let mut acc = x[j];
            for c in j + 1..k {
                acc -= self.lu.at(j, c) * x[c];
            }
            x[j] = acc / self.lu.at(j, j);
        }
        x
    }
}
