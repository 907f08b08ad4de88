//! Synthetic symmetric test problems with known spectra.
//!
//! `A = Q·diag(λ)·Qᵀ` where Q comes from a Householder QR factorization of a
//! seeded standard-normal matrix (signs canonicalized so the R diagonal is
//! positive). Everything downstream of the seed is deterministic.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::block::VectorBlock;
use crate::linalg::dense::DenseSym;
use crate::linalg::rng::SplitMix64;

/// The spectrum a generated matrix was built from, eigenvalues sorted by
/// descending magnitude, plus the seed of the orthogonal basis.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumModel {
    pub lambdas: Vec<f64>,
    pub basis_seed: u64,
}

/// Orthogonal factor of a Householder QR of a seeded standard-normal n×n
/// matrix. Column signs are fixed so that the R diagonal is nonnegative,
/// making the basis a deterministic function of (n, seed).
pub fn random_orthogonal(n: usize, seed: u64) -> VectorBlock {
    let mut g = SplitMix64::new(seed);
    let mut m = VectorBlock::from_fn(n, n, |_, _| g.next_normal());
    let mut reflectors: Vec<(usize, Vec<f64>, f64)> = Vec::new(); // (offset j, v, beta)
    let mut r_diag_sign = vec![1.0f64; n];

    for j in 0..n {
        // Householder vector for column j, rows j..n.
        let x = &m.col(j)[j..];
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|t| t * t).sum();
        if vtv == 0.0 {
            r_diag_sign[j] = alpha.signum();
            continue;
        }
        let beta = 2.0 / vtv;
        // Apply I - beta v vᵀ to the trailing columns.
        for c in j..n {
            let col = &mut m.col_mut(c)[j..];
            let s: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            let s = beta * s;
            for (cv, vv) in col.iter_mut().zip(&v) {
                *cv -= s * vv;
            }
        }
        r_diag_sign[j] = m.at(j, j).signum();
        reflectors.push((j, v, beta));
    }

    // Accumulate Q = H_0 · H_1 ⋯ applied to I, in reverse order.
    let mut q = VectorBlock::identity_cols(n, n);
    for (j, v, beta) in reflectors.iter().rev() {
        for c in 0..n {
            let col = &mut q.col_mut(c)[*j..];
            let s: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            let s = beta * s;
            for (cv, vv) in col.iter_mut().zip(v) {
                *cv -= s * vv;
            }
        }
    }
    // Canonical signs: R diagonal nonnegative.
    for j in 0..n {
        if r_diag_sign[j] < 0.0 {
            q.scale_col(j, -1.0);
        }
    }
    q
}

/// Assemble Q·diag(λ)·Qᵀ as a dense symmetric matrix.
fn assemble(q: &VectorBlock, lambdas: &[f64]) -> Result<DenseSym> {
    let n = q.nrows();
    let mut a = VectorBlock::zeros(n, n);
    for j in 0..n {
        let aj = a.col_mut(j);
        for l in 0..n {
            let s = lambdas[l] * q.at(j, l);
            if s == 0.0 {
                continue;
            }
            let ql = q.col(l);
            for i in 0..n {
                aj[i] += s * ql[i];
            }
        }
    }
    DenseSym::from_entries(n, a.data().to_vec())
}

fn validate_spectrum(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("spectrum must be nonempty".into()));
    }
    if let Some(bad) = lambdas.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("eigenvalue {bad}")));
    }
    Ok(())
}

/// Random-SVD-style test matrix.
///
/// * mode 3: geometrically graded spectrum λ_i = κ^(−(i−1)/(n−1))
/// * mode 4: arithmetically graded spectrum λ_i = 1 − ((i−1)/(n−1))(1 − 1/κ)
///
/// Returns the matrix, its spectrum model, and the exact eigenvector basis
/// (column j belongs to λ_j).
pub fn gen_randsvd_like(
    n: usize,
    kappa: f64,
    mode: u32,
    seed: u64,
) -> Result<(DenseSym, SpectrumModel, VectorBlock)> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if !(kappa >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "condition target must be >= 1, got {kappa}"
        )));
    }
    let denom = (n.max(2) - 1) as f64;
    let lambdas: Vec<f64> = match mode {
        3 => (0..n).map(|i| kappa.powf(-(i as f64) / denom)).collect(),
        4 => (0..n).map(|i| 1.0 - (i as f64 / denom) * (1.0 - 1.0 / kappa)).collect(),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unsupported spectrum mode {other} (3 = geometric, 4 = arithmetic)"
            )));
        }
    };
    let q = random_orthogonal(n, seed);
    let a = assemble(&q, &lambdas)?;
    Ok((a, SpectrumModel { lambdas, basis_seed: seed }, q))
}

/// Matrix with the given spectrum in a random orthogonal basis. The
/// eigenvalues are sorted by descending magnitude (stable on ties) and the
/// returned basis columns follow that order.
pub fn gen_spectrum(
    lambdas: &[f64],
    seed: u64,
) -> Result<(DenseSym, SpectrumModel, VectorBlock)> {
    validate_spectrum(lambdas)?;
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| {
        lambdas[b]
            .abs()
            .partial_cmp(&lambdas[a].abs())
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let sorted: Vec<f64> = order.iter().map(|&i| lambdas[i]).collect();
    let n = lambdas.len();
    let q = random_orthogonal(n, seed);
    let a = assemble(&q, &sorted)?;
    Ok((a, SpectrumModel { lambdas: sorted, basis_seed: seed }, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::block::UNIT_ROUNDOFF;
    use crate::linalg::operator::SymmetricOperator;

    #[test]
    fn random_orthogonal_is_orthogonal_and_deterministic() {
        let q = random_orthogonal(30, 77);
        let dev = q.gram().identity_deviation();
        assert!(dev <= 30.0 * 30.0 * 64.0 * UNIT_ROUNDOFF, "deviation {dev}");
        let q2 = random_orthogonal(30, 77);
        assert_eq!(q, q2);
        let q3 = random_orthogonal(30, 78);
        assert!(q.sub(&q3).unwrap().frobenius() > 1e-3);
    }

    #[test]
    fn randsvd_mode3_spectrum_endpoints() {
        let (_, model, _) = gen_randsvd_like(10, 1e4, 3, 1).unwrap();
        assert_eq!(model.lambdas[0], 1.0);
        assert!((model.lambdas[9] - 1e-4).abs() < 1e-18);
        for w in model.lambdas.windows(2) {
            assert!((w[1] / w[0] - model.lambdas[1] / model.lambdas[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn randsvd_mode4_spectrum_is_arithmetic() {
        let (_, model, _) = gen_randsvd_like(5, 100.0, 4, 1).unwrap();
        assert_eq!(model.lambdas[0], 1.0);
        assert!((model.lambdas[4] - 0.01).abs() < 1e-15);
        let d = model.lambdas[0] - model.lambdas[1];
        for w in model.lambdas.windows(2) {
            assert!((w[0] - w[1] - d).abs() < 1e-15);
        }
    }

    #[test]
    fn construction_residual_is_small() {
        let n = 60;
        let (a, model, q) = gen_randsvd_like(n, 1e5, 3, 9).unwrap();
        let aq = a.apply_block(&q).unwrap();
        let mut ql = q.clone();
        for j in 0..n {
            ql.scale_col(j, model.lambdas[j]);
        }
        let resid = aq.sub(&ql).unwrap().frobenius();
        let bound = 50.0 * n as f64 * UNIT_ROUNDOFF * a.norm_fro();
        assert!(resid <= bound, "residual {resid} vs bound {bound}");
    }

    #[test]
    fn gen_spectrum_sorts_by_magnitude() {
        let (_, model, _) = gen_spectrum(&[0.5, -2.0, 1.0], 3).unwrap();
        assert_eq!(model.lambdas, vec![-2.0, 1.0, 0.5]);
    }

    #[test]
    fn invalid_requests_are_rejected() {
        assert!(gen_randsvd_like(10, 0.5, 3, 0).is_err());
        assert!(gen_randsvd_like(10, 10.0, 5, 0).is_err());
        assert!(gen_spectrum(&[], 0).is_err());
        assert!(gen_spectrum(&[f64::INFINITY], 0).is_err());
    }

    #[test]
    fn norm_inf_bounds_the_spectral_radius() {
        let (a, model, _) = gen_spectrum(&[1.0, 0.5, -0.25, 0.1], 11).unwrap();
        assert!(a.norm_inf() >= model.lambdas[0].abs() - 1e-12);
    }
}
