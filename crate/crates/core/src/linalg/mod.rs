//! Storage types, deterministic kernels, generators, and Matrix Market I/O.

pub mod block;
pub mod dense;
pub mod generate;
pub mod market;
pub mod operator;
pub mod rng;
pub mod sparse;

pub use block::{dot, VectorBlock, UNIT_ROUNDOFF};
pub use dense::DenseSym;
pub use generate::{gen_randsvd_like, gen_spectrum, random_orthogonal, SpectrumModel};
pub use market::{MmData, SymStorage};
pub use operator::{two_norm_estimate, ParallelApply, SymmetricOperator};
pub use rng::SplitMix64;
pub use sparse::SparseSym;
