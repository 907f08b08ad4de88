//! Dense symmetric matrices.

use crate::error::{Error, Result};
use crate::linalg::block::{dot, VectorBlock};
use crate::linalg::operator::SymmetricOperator;

/// A dense real symmetric n×n matrix, stored column-major in full.
///
/// Symmetry is enforced on construction: entry (i, j) and entry (j, i) hold
/// the *same* floating-point value (the average of the two inputs, which is
/// exact when the input is already symmetric).
#[derive(Clone, Debug)]
pub struct DenseSym {
    n: usize,
    data: Vec<f64>,
}

impl DenseSym {
    /// Build from a full square column-major buffer of length n².
    pub fn from_entries(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "dense symmetric: buffer has {} entries, expected {n}x{n}",
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("dense matrix entry {bad}")));
        }
        let mut data = entries;
        for j in 0..n {
            for i in 0..j {
                let v = 0.5 * (data[j * n + i] + data[i * n + j]);
                data[j * n + i] = v;
                data[i * n + j] = v;
            }
        }
        Ok(Self { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let b = VectorBlock::from_fn(n, n, f);
        Self::from_entries(n, b.data().to_vec())
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.n && j < self.n);
        self.data[j * self.n + i]
    }

    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.n + i] = v;
        self.data[i * self.n + j] = v;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    /// View of the entries as an n×n block (for serialization and tests).
    pub fn as_block(&self) -> VectorBlock {
        VectorBlock::from_raw(self.n, self.n, self.data.clone()).expect("square buffer")
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Matrix–vector product into `out`. By symmetry, row i of A equals
    /// column i, so each output entry is a contiguous fixed-order dot.
    pub fn apply_vec(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            out[i] = dot(self.col(i), x);
        }
    }
}

impl SymmetricOperator for DenseSym {
    fn n(&self) -> usize {
        self.n
    }

    fn apply_block(&self, b: &VectorBlock) -> Result<VectorBlock> {
        if b.nrows() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "apply: matrix is {0}x{0}, block is {1}x{2}",
                self.n,
                b.nrows(),
                b.ncols()
            )));
        }
        let mut out = VectorBlock::zeros(self.n, b.ncols());
        for j in 0..b.ncols() {
            self.apply_vec(b.col(j), out.col_mut(j));
        }
        Ok(out)
    }

    /// Maximum absolute row sum; an upper bound on the spectral norm.
    fn norm_inf(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.n {
            // Row i equals column i.
            let s: f64 = self.col(i).iter().map(|v| v.abs()).sum();
            best = best.max(s);
        }
        best
    }
}
