//! Sparse symmetric matrices in compressed sparse row form.

use crate::error::{Error, Result};
use crate::linalg::block::VectorBlock;
use crate::linalg::dense::DenseSym;
use crate::linalg::operator::SymmetricOperator;

/// A sparse real symmetric matrix, CSR with *both* triangles materialized so
/// that a row traversal sees every entry of the row. Column indices are
/// strictly increasing within each row.
#[derive(Clone, Debug)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSym {
    /// Build from coordinate triples. Entries may be given for one triangle
    /// only (the mirror is added automatically) or for both triangles (the
    /// two values must then agree exactly). Duplicate coordinates are
    /// rejected. Indices are 0-based here; the Matrix Market reader converts.
    pub fn from_triples(n: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        use std::collections::BTreeMap;
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, v) in triples {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch(format!(
                    "sparse entry ({i}, {j}) out of range for n = {n}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("sparse entry ({i}, {j}) = {v}")));
            }
            if map.insert((i, j), v).is_some() {
                return Err(Error::Market(format!("duplicate entry at ({i}, {j})")));
            }
        }
        // Mirror, checking exact value symmetry where both triangles appear.
        let snapshot: Vec<((usize, usize), f64)> = map.iter().map(|(&k, &v)| (k, v)).collect();
        for ((i, j), v) in snapshot {
            if i == j {
                continue;
            }
            match map.get(&(j, i)) {
                None => {
                    map.insert((j, i), v);
                }
                Some(&w) if w == v => {}
                Some(&w) => {
                    return Err(Error::Market(format!(
                        "matrix is not symmetric: ({i}, {j}) = {v} but ({j}, {i}) = {w}"
                    )));
                }
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _) in map.keys() {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let nnz = map.len();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        // BTreeMap iteration is (row, col) sorted, exactly CSR order.
        for ((_, j), v) in map {
            col_idx.push(j);
            values.push(v);
        }
        Ok(Self { n, row_ptr, col_idx, values })
    }

    /// Number of stored entries (both triangles).
    pub fn nnz_stored(&self) -> usize {
        self.values.len()
    }

    /// Iterate the stored entries of row i as (col, value).
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    /// Entries of the lower triangle (i ≥ j), row-major, for serialization.
    pub fn lower_triangle(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if j <= i {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    pub fn norm_fro(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Densify (test and oracle use only; guarded by the caller's size limits).
    pub fn to_dense(&self) -> DenseSym {
        let mut a = DenseSym::zeros(self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                a.set_sym(i, j, v);
            }
        }
        a
    }
}

impl SymmetricOperator for SparseSym {
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
        for c in 0..b.ncols() {
            let x = b.col(c);
            let y = out.col_mut(c);
            for i in 0..self.n {
                let mut acc = 0.0;
                for (j, v) in self.row(i) {
                    acc += v * x[j];
                }
                y[i] = acc;
            }
        }
        Ok(out)
    }

    fn norm_inf(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.n {
            let s: f64 = self.row(i).map(|(_, v)| v.abs()).sum();
            best = best.max(s);
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arrow() -> SparseSym {
        // [2 1 0; 1 3 0; 0 0 4] given as the lower triangle only.
        SparseSym::from_triples(3, &[(0, 0, 2.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, 4.0)]).unwrap()
    }

    #[test]
    fn mirror_is_materialized() {
        let a = arrow();
        assert_eq!(a.nnz_stored(), 5);
        let row0: Vec<_> = a.row(0).collect();
        assert_eq!(row0, vec![(0, 2.0), (1, 1.0)]);
    }

    #[test]
    fn apply_matches_dense() {
        let a = arrow();
        let d = a.to_dense();
        let b = VectorBlock::from_fn(3, 2, |i, j| (i + 2 * j) as f64 - 1.5);
        let ys = a.apply_block(&b).unwrap();
        let yd = d.apply_block(&b).unwrap();
        for j in 0..2 {
            for i in 0..3 {
                assert!((ys.at(i, j) - yd.at(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn conflicting_triangles_are_rejected() {
        let r = SparseSym::from_triples(2, &[(0, 1, 1.0), (1, 0, 2.0)]);
        assert!(matches!(r, Err(Error::Market(_))));
    }

    #[test]
    fn duplicates_are_rejected() {
        let r = SparseSym::from_triples(2, &[(0, 0, 1.0), (0, 0, 1.0)]);
        assert!(matches!(r, Err(Error::Market(_))));
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let r = SparseSym::from_triples(2, &[(0, 5, 1.0)]);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn norm_inf_is_max_row_sum() {
        let a = arrow();
        assert_eq!(a.norm_inf(), 4.0f64.max(2.0 + 1.0).max(1.0 + 3.0));
    }
}
