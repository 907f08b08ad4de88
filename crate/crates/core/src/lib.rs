//! Iterative refinement of a selected subset of eigenvectors of a real
//! symmetric matrix.
//!
//! Given rough approximations to the k dominant (or, via spectral shifts, the
//! k smallest / largest / smallest-magnitude) eigenvectors of a symmetric
//! matrix, the [`refine`] module sharpens them toward working precision using
//! a compact WY representation of the approximate basis ([`wy`]). Supporting
//! modules provide cluster preprocessing ([`cluster`]), shifted operator
//! variants ([`variants`]), the convergence theory constants and bounds
//! ([`theory`]), and an independent dense eigensolver plus subspace-distance
//! measurements used for validation ([`oracle`]).

// Validation guards are written `!(x > 0.0)` on purpose: the negated form
// rejects NaN, which the suggested `partial_cmp` rewrite would quietly admit.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Kernels index several same-shaped arrays in one loop; iterator zips of
// three-plus slices obscure the subscript arithmetic the formulas are
// written in.
#![allow(clippy::needless_range_loop)]

pub mod cluster;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod refine;
pub mod theory;
pub mod variants;
pub mod wy;

pub use error::{Error, Result};
