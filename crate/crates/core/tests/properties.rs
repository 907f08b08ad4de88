//! Randomized invariants checked with proptest: storage round trips, the
//! dense/sparse operator agreement, WY factor identities, binary32 rounding
//! idempotence, and cluster-detection closure.

use proptest::prelude::*;

use eigrefine::cluster::detect_clusters;
use eigrefine::linalg::{market, SparseSym, SplitMix64, SymmetricOperator, VectorBlock};
use eigrefine::oracle::round_binary32;
use eigrefine::wy::{compact_wy_lu, factor_with_fallback};

fn finite_f64() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e12f64..1e12,
        -1.0f64..1.0,
        Just(0.0),
        Just(-0.0),
        Just(1.0),
        Just(f64::MIN_POSITIVE),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// A dense block survives a Matrix Market format/parse cycle bit-exactly.
    #[test]
    fn mm_block_round_trip(
        n in 1usize..12,
        k in 1usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = SplitMix64::new(seed);
        let b = VectorBlock::from_fn(n, k, |_, _| {
            // Mix magnitudes so exponent handling is exercised.
            rng.next_normal() * 10f64.powi((rng.next_u64() % 41) as i32 - 20)
        });
        let text = market::format_block(&b);
        let parsed = match market::parse(&text).unwrap() {
            market::MmData::Array(p) => p,
            other => panic!("expected an array file, got {other:?}"),
        };
        prop_assert_eq!(parsed.nrows(), n);
        prop_assert_eq!(parsed.ncols(), k);
        for j in 0..k {
            for i in 0..n {
                prop_assert_eq!(parsed.at(i, j).to_bits(), b.at(i, j).to_bits(), "({}, {})", i, j);
            }
        }
    }

    /// A symmetric coordinate file reproduces every stored value bit-exactly.
    #[test]
    fn mm_sparse_round_trip(n in 1usize..14, seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let mut triples = Vec::new();
        for i in 0..n {
            triples.push((i, i, 1.0 + rng.next_normal()));
            for j in 0..i {
                if rng.next_f64() < 0.3 {
                    triples.push((i, j, rng.next_normal()));
                }
            }
        }
        let a = SparseSym::from_triples(n, &triples).unwrap();
        let text = market::format_sparse(&a);
        let parsed = match market::parse(&text).unwrap() {
            market::MmData::Sparse(p) => p,
            other => panic!("expected a coordinate file, got {other:?}"),
        };
        prop_assert_eq!(parsed.nnz_stored(), a.nnz_stored());
        let (mut have, mut want) = (parsed.lower_triangle(), a.lower_triangle());
        have.sort_by_key(|&(i, j, _)| (j, i));
        want.sort_by_key(|&(i, j, _)| (j, i));
        for (h, w) in have.iter().zip(&want) {
            prop_assert_eq!(h.0, w.0);
            prop_assert_eq!(h.1, w.1);
            prop_assert_eq!(h.2.to_bits(), w.2.to_bits());
        }
    }

    /// Sparse and dense storages of the same matrix apply identically up to
    /// rounding in the dense accumulation order.
    #[test]
    fn sparse_dense_apply_agree(n in 1usize..20, k in 1usize..4, seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let mut triples = Vec::new();
        for i in 0..n {
            triples.push((i, i, 2.0 + rng.next_normal()));
            for j in 0..i {
                if rng.next_f64() < 0.4 {
                    triples.push((i, j, rng.next_normal()));
                }
            }
        }
        let sparse = SparseSym::from_triples(n, &triples).unwrap();
        let dense = sparse.to_dense();
        let b = VectorBlock::from_fn(n, k, |_, _| rng.next_normal());
        let ys = sparse.apply_block(&b).unwrap();
        let yd = dense.apply_block(&b).unwrap();
        let diff = ys.sub(&yd).unwrap().max_abs();
        let scale = dense.norm_fro() * b.max_abs() + 1.0;
        prop_assert!(diff <= 1e-13 * scale, "diff {diff:.3e}, scale {scale:.3e}");
    }

    /// The shifted-LU WY construction has bounded pivots by design, so its
    /// factor is orthogonal and maps the identity columns onto ±the block
    /// for every orthonormal input. (The plain construction's accuracy
    /// legitimately degrades when Y₁ is ill-conditioned, e.g. a rotation
    /// near the identity; the adaptive route must still always succeed.)
    #[test]
    fn wy_factor_identities(n in 1usize..30, k_raw in 1usize..8, seed in any::<u64>()) {
        let k = k_raw.min(n);
        let mut rng = SplitMix64::new(seed);
        let q = VectorBlock::from_fn(n, k, |_, _| rng.next_normal())
            .orthonormalize()
            .unwrap();
        let f = compact_wy_lu(&q).unwrap();
        prop_assert!(f.orthogonality_defect() <= 1e-12);
        let mut qs = q.clone();
        for (j, &s) in f.sigma().iter().enumerate() {
            prop_assert!(s == 1.0 || s == -1.0);
            qs.scale_col(j, s);
        }
        let mapping = f.reconstruct_targets().sub(&qs).unwrap().frobenius();
        prop_assert!(mapping <= 1e-12, "mapping residual {}", mapping);
        let (adaptive, _) = factor_with_fallback(&q).unwrap();
        prop_assert!(adaptive.orthogonality_defect().is_finite());
    }

    /// Rounding through binary32 is idempotent.
    #[test]
    fn round_binary32_idempotent(
        n in 1usize..10,
        k in 1usize..5,
        vals in proptest::collection::vec(finite_f64(), 50),
    ) {
        let b = VectorBlock::from_fn(n, k, |i, j| vals[(j * n + i) % vals.len()]);
        let once = round_binary32(&b).unwrap();
        let twice = round_binary32(&once).unwrap();
        for j in 0..k {
            for i in 0..n {
                prop_assert_eq!(once.at(i, j).to_bits(), twice.at(i, j).to_bits());
            }
        }
    }

    /// Cluster detection closure: any two values within delta share a group,
    /// groups are disjoint, have at least two members, and hold valid
    /// indices.
    #[test]
    fn detect_clusters_closure(
        vals in proptest::collection::vec(-10.0f64..10.0, 1..20),
        delta in 0.0f64..2.0,
    ) {
        let groups = detect_clusters(&vals, delta);
        let mut owner = vec![usize::MAX; vals.len()];
        for (g, members) in groups.iter().enumerate() {
            prop_assert!(members.len() >= 2);
            for &i in members {
                prop_assert!(i < vals.len());
                prop_assert_eq!(owner[i], usize::MAX, "index {} in two groups", i);
                owner[i] = g;
            }
        }
        for i in 0..vals.len() {
            for j in 0..i {
                if (vals[i] - vals[j]).abs() <= delta {
                    prop_assert_eq!(
                        owner[i], owner[j],
                        "values {} and {} within {} but split",
                        vals[i], vals[j], delta
                    );
                    prop_assert!(owner[i] != usize::MAX);
                }
            }
        }
    }
}
