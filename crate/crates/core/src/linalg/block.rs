//! Column-major blocks of vectors and the small dense kernels built on them.
//!
//! `VectorBlock` stores an n×m block in one contiguous column-major buffer.
//! Every kernel in this module sums in a fixed (ascending-index) order, so
//! repeated runs produce bit-identical results; that determinism is part of
//! the library contract and is relied on by the run manifests.

use serde::Serialize;

use crate::error::{Error, Result};

/// Unit roundoff of binary64 (2⁻⁵³).
pub const UNIT_ROUNDOFF: f64 = 1.0 / 9007199254740992.0;

/// An n×m block of column vectors, column-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VectorBlock {
    n: usize,
    m: usize,
    #[serde(skip)]
    data: Vec<f64>,
}

impl VectorBlock {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self { n, m, data: vec![0.0; n * m] }
    }

    /// Build from a generator `f(i, j)` evaluated column by column.
    pub fn from_fn(n: usize, m: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut b = Self::zeros(n, m);
        for j in 0..m {
            for i in 0..n {
                b.data[j * n + i] = f(i, j);
            }
        }
        b
    }

    /// Column-major raw construction. `data.len()` must equal `n * m`.
    pub fn from_raw(n: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * m {
            return Err(Error::DimensionMismatch(format!(
                "raw buffer has {} entries, expected {}x{}",
                data.len(),
                n,
                m
            )));
        }
        Ok(Self { n, m, data })
    }

    /// The first k columns of the n×n identity.
    pub fn identity_cols(n: usize, k: usize) -> Self {
        Self::from_fn(n, k, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.m
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.n && j < self.m);
        self.data[j * self.n + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.m);
        self.data[j * self.n + i] = v;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Copy of the columns `lo..hi`.
    pub fn columns(&self, lo: usize, hi: usize) -> Self {
        assert!(lo <= hi && hi <= self.m);
        Self { n: self.n, m: hi - lo, data: self.data[lo * self.n..hi * self.n].to_vec() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn scale_col(&mut self, j: usize, s: f64) {
        for v in self.col_mut(j) {
            *v *= s;
        }
    }

    /// self + other
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "add")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { n: self.n, m: self.m, data })
    }

    /// self - other
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "sub")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { n: self.n, m: self.m, data })
    }

    /// self += s * other
    pub fn add_scaled(&mut self, other: &Self, s: f64) -> Result<()> {
        self.check_same_shape(other, "add_scaled")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.n != other.n || self.m != other.m {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.n, self.m, other.n, other.m
            )));
        }
        Ok(())
    }

    /// selfᵀ · other, an m×m' block. Summation runs down each column pair in
    /// ascending row order.
    pub fn transpose_times(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!(
                "transpose_times: {}x{} vs {}x{}",
                self.n, self.m, other.n, other.m
            )));
        }
        let mut out = Self::zeros(self.m, other.m);
        for j in 0..other.m {
            let bj = other.col(j);
            for i in 0..self.m {
                out.data[j * self.m + i] = dot(self.col(i), bj);
            }
        }
        Ok(out)
    }

    /// self · other, an n×p block (other is m×p).
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.m != other.n {
            return Err(Error::DimensionMismatch(format!(
                "matmul: {}x{} vs {}x{}",
                self.n, self.m, other.n, other.m
            )));
        }
        let mut out = Self::zeros(self.n, other.m);
        for j in 0..other.m {
            let oc = &mut out.data[j * self.n..(j + 1) * self.n];
            for l in 0..self.m {
                let s = other.at(l, j);
                if s == 0.0 {
                    continue;
                }
                let ac = self.col(l);
                for i in 0..self.n {
                    oc[i] += s * ac[i];
                }
            }
        }
        Ok(out)
    }

    /// The m×m Gram matrix selfᵀ·self. Symmetric by construction: the (i,j)
    /// and (j,i) entries are the same computed value.
    pub fn gram(&self) -> Self {
        let mut g = Self::zeros(self.m, self.m);
        for j in 0..self.m {
            for i in 0..=j {
                let v = dot(self.col(i), self.col(j));
                g.data[j * self.m + i] = v;
                g.data[i * self.m + j] = v;
            }
        }
        g
    }

    /// ‖self − I‖_F for a square block (used on Gram matrices).
    pub fn identity_deviation(&self) -> f64 {
        debug_assert_eq!(self.n, self.m);
        let mut acc = 0.0;
        for j in 0..self.m {
            for i in 0..self.n {
                let d = self.at(i, j) - if i == j { 1.0 } else { 0.0 };
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    /// Normalize every column to unit 2-norm; returns the original norms.
    pub fn normalize_columns(&mut self) -> Result<Vec<f64>> {
        let mut norms = Vec::with_capacity(self.m);
        for j in 0..self.m {
            let norm = dot(self.col(j), self.col(j)).sqrt();
            if !norm.is_finite() {
                return Err(Error::NonFinite(format!("norm of column {j}")));
            }
            if norm == 0.0 {
                return Err(Error::RankDeficient { column: j });
            }
            self.scale_col(j, 1.0 / norm);
            norms.push(norm);
        }
        Ok(norms)
    }

    /// Modified Gram–Schmidt with one full reorthogonalization pass
    /// ("twice is enough"). Fails if a column drops below n·u times the
    /// largest original column norm during elimination.
    pub fn orthonormalize(&self) -> Result<Self> {
        let mut q = self.clone();
        let mut max_norm: f64 = 0.0;
        for j in 0..self.m {
            max_norm = max_norm.max(dot(self.col(j), self.col(j)).sqrt());
        }
        let floor = self.n as f64 * UNIT_ROUNDOFF * max_norm;
        for j in 0..self.m {
            for _pass in 0..2 {
                for i in 0..j {
                    let r = dot(q.col(i), q.col(j));
                    let (head, tail) = q.data.split_at_mut(j * self.n);
                    let qi = &head[i * self.n..(i + 1) * self.n];
                    let qj = &mut tail[..self.n];
                    for (y, x) in qj.iter_mut().zip(qi) {
                        *y -= r * x;
                    }
                }
            }
            let norm = dot(q.col(j), q.col(j)).sqrt();
            if !norm.is_finite() || norm <= floor {
                return Err(Error::RankDeficient { column: j });
            }
            q.scale_col(j, 1.0 / norm);
        }
        Ok(q)
    }
}

/// Fixed-order dot product (ascending index).
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rng::SplitMix64;

    fn random_block(n: usize, m: usize, seed: u64) -> VectorBlock {
        let mut g = SplitMix64::new(seed);
        VectorBlock::from_fn(n, m, |_, _| g.next_normal())
    }

    #[test]
    fn identity_cols_shape() {
        let e = VectorBlock::identity_cols(4, 2);
        assert_eq!(e.at(0, 0), 1.0);
        assert_eq!(e.at(1, 1), 1.0);
        assert_eq!(e.at(2, 0), 0.0);
        assert_eq!(e.frobenius(), 2.0f64.sqrt());
    }

    #[test]
    fn gram_matches_transpose_times() {
        let b = random_block(17, 5, 3);
        let g = b.gram();
        let tt = b.transpose_times(&b).unwrap();
        for j in 0..5 {
            for i in 0..5 {
                assert!((g.at(i, j) - tt.at(i, j)).abs() <= 1e-15 * g.max_abs());
                assert_eq!(g.at(i, j), g.at(j, i));
            }
        }
    }

    #[test]
    fn orthonormalize_produces_orthonormal_columns() {
        let b = random_block(40, 8, 5);
        let q = b.orthonormalize().unwrap();
        let dev = q.gram().identity_deviation();
        assert!(dev <= 64.0 * 8.0 * 8.0 * UNIT_ROUNDOFF, "deviation {dev}");
    }

    #[test]
    fn orthonormalize_is_stationary_on_orthonormal_input() {
        let q = random_block(30, 4, 9).orthonormalize().unwrap();
        let q2 = q.orthonormalize().unwrap();
        let diff = q.sub(&q2).unwrap().frobenius();
        assert!(diff <= 1e-13, "diff {diff}");
    }

    #[test]
    fn orthonormalize_rejects_dependent_columns() {
        let mut b = random_block(20, 3, 1);
        let c0 = b.col(0).to_vec();
        b.col_mut(2).copy_from_slice(&c0);
        match b.orthonormalize() {
            Err(Error::RankDeficient { column }) => assert_eq!(column, 2),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn matmul_against_hand_example() {
        // [1 2; 3 4; 5 6] * [1 0; 1 1]
        let a = VectorBlock::from_raw(3, 2, vec![1.0, 3.0, 5.0, 2.0, 4.0, 6.0]).unwrap();
        let b = VectorBlock::from_raw(2, 2, vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.col(0), &[3.0, 7.0, 11.0]);
        assert_eq!(c.col(1), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = VectorBlock::zeros(3, 2);
        let b = VectorBlock::zeros(4, 2);
        assert!(matches!(a.add(&b), Err(Error::DimensionMismatch(_))));
        assert!(matches!(a.transpose_times(&b), Err(Error::DimensionMismatch(_))));
    }
}
