//! The operator abstraction the refinement loop runs against.

use crate::error::Result;
use crate::linalg::block::VectorBlock;
use crate::linalg::rng::SplitMix64;

/// Seed of the power-iteration stream used by [`two_norm_estimate`]. Fixed so
/// that displayed norm estimates are reproducible.
pub const NORM_EST_SEED: u64 = 0x5EED_4E57_0001;

/// Number of power-iteration steps behind every displayed ‖A‖₂ estimate.
pub const NORM_EST_STEPS: usize = 20;

/// A self-adjoint operator on ℝⁿ. Implementations must be deterministic:
/// `apply_block` on equal inputs returns bitwise-equal outputs.
///
/// Implementations are immutable (interior counters aside) and safe to share
/// across threads, which the per-column parallel wrapper relies on.
pub trait SymmetricOperator: Sync {
    fn n(&self) -> usize;

    /// B ↦ A·B, column by column.
    fn apply_block(&self, b: &VectorBlock) -> Result<VectorBlock>;

    /// An inexpensive upper bound on the spectral norm (max absolute row sum
    /// for stored matrices; a product/sum bound for derived operators).
    fn norm_inf(&self) -> f64;
}

/// ‖A‖₂ estimate from a fixed number of power-iteration steps on a seeded
/// random start vector. Used wherever an *estimate* (rather than a bound) is
/// reported, e.g. relative-residual denominators.
pub fn two_norm_estimate(op: &dyn SymmetricOperator) -> Result<f64> {
    let n = op.n();
    let mut g = SplitMix64::new(NORM_EST_SEED);
    let mut v = VectorBlock::from_fn(n, 1, |_, _| g.next_normal());
    let norm0 = v.frobenius();
    v.scale(1.0 / norm0);
    let mut estimate = 0.0;
    for _ in 0..NORM_EST_STEPS {
        let w = op.apply_block(&v)?;
        estimate = w.frobenius();
        if estimate == 0.0 {
            return Ok(0.0);
        }
        v = w;
        v.scale(1.0 / estimate);
    }
    Ok(estimate)
}

/// Determinism-preserving parallel apply: fans the columns of B out across
/// threads, one `apply_block` per column. Summation order within each column
/// is untouched, so the result is bitwise identical to the serial path.
pub struct ParallelApply<'a> {
    inner: &'a dyn SymmetricOperator,
}

impl<'a> ParallelApply<'a> {
    pub fn new(inner: &'a dyn SymmetricOperator) -> Self {
        Self { inner }
    }
}

impl SymmetricOperator for ParallelApply<'_> {
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn apply_block(&self, b: &VectorBlock) -> Result<VectorBlock> {
        use rayon::prelude::*;
        if b.ncols() <= 1 {
            return self.inner.apply_block(b);
        }
        let cols: Vec<Result<VectorBlock>> = (0..b.ncols())
            .into_par_iter()
            .map(|j| self.inner.apply_block(&b.columns(j, j + 1)))
            .collect();
        let mut out = VectorBlock::zeros(b.nrows(), b.ncols());
        for (j, col) in cols.into_iter().enumerate() {
            out.col_mut(j).copy_from_slice(col?.col(0));
        }
        Ok(out)
    }

    fn norm_inf(&self) -> f64 {
        self.inner.norm_inf()
    }
}
