//! Property tests over the curve encoders, partition metrics and the
//! distributed kernels.

use proptest::prelude::*;
use reskit_core::grid::{GridSpec, StructuredGrid};
use reskit_core::linalg::{axpbyz, dot, CsrMatrix, DistMatrix, DistVector};
use reskit_core::partition::{
    connectivity, load_imbalance, partition_sfc, surface_indices, SfcEncoder,
};
use reskit_core::runtime::{spawn_ranks, IndexMap, RankCtx};
use reskit_core::sfc::{gray_backward, gray_forward, morton_encode, LatticeCoord};
use std::sync::Arc;

proptest! {
    #[test]
    fn gray_round_trip(n in 1usize..=6, j in 0u64..64) {
        let j = j % (1 << n);
        let bits = gray_backward(j, n).unwrap();
        prop_assert_eq!(gray_forward(&bits).unwrap(), j);
    }

    #[test]
    fn morton_is_monotone_in_each_axis(
        x in 0u64..16, y in 0u64..16, z in 0u64..16, axis in 0usize..3
    ) {
        let mut shifted = [x, y, z];
        if shifted[axis] == 15 {
            shifted[axis] -= 1;
        }
        let mut upper = shifted;
        upper[axis] += 1;
        let a = morton_encode(&LatticeCoord::new(shifted.to_vec()), 4).unwrap();
        let b = morton_encode(&LatticeCoord::new(upper.to_vec()), 4).unwrap();
        prop_assert!(a < b);
    }

    #[test]
    fn sfc_partitions_balance_arbitrary_grids(
        nx in 1usize..=6, ny in 1usize..=6, nz in 1usize..=3, np in 1usize..=5
    ) {
        let grid = StructuredGrid::build(GridSpec::unit([nx, ny, nz]).unwrap()).unwrap();
        let ncells = grid.num_cells();
        prop_assume!(np <= ncells);
        for enc in [SfcEncoder::HilbertNd, SfcEncoder::Hilbert3dTable, SfcEncoder::Morton] {
            let p = partition_sfc(&grid, np, enc).unwrap();
            p.validate().unwrap();
            let sizes = p.sizes();
            let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
            prop_assert!(spread <= 1);
            prop_assert!(load_imbalance(&p) >= 1.0);
            let s = surface_indices(&grid, &p);
            for (b, f) in s.boundary_faces.iter().zip(&s.total_faces) {
                prop_assert!(b <= f);
            }
            let c = connectivity(&grid, &p);
            prop_assert!(c.max <= np.saturating_sub(1));
        }
    }
}

fn run_vector_property(
    n: usize,
    np: usize,
    check: impl Fn(&RankCtx, Arc<IndexMap>) -> reskit_core::Result<()> + Sync,
) {
    spawn_ranks(np, |ctx| {
        let map = Arc::new(IndexMap::block(n, ctx.nprocs(), ctx.rank()));
        check(ctx, map)
    })
    .unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dot_is_symmetric_distributed(seed in 0u64..500, np in 1usize..=4) {
        let n = 37;
        run_vector_property(n, np, |ctx, map| {
            let lo = map.offsets()[ctx.rank()];
            let xs: Vec<f64> = (0..map.nlocal())
                .map(|l| (((lo + l) as f64 + seed as f64) * 0.37).sin())
                .collect();
            let ys: Vec<f64> = (0..map.nlocal())
                .map(|l| (((lo + l) as f64 - seed as f64) * 0.11).cos())
                .collect();
            let x = DistVector::from_owned(Arc::clone(&map), xs)?;
            let y = DistVector::from_owned(Arc::clone(&map), ys)?;
            let a = dot(ctx, &x, &y)?;
            let b = dot(ctx, &y, &x)?;
            assert_eq!(a.to_bits(), b.to_bits());
            Ok(())
        });
    }

    #[test]
    fn spmv_is_linear(seed in 0u64..200) {
        let n = 24;
        // fixed sparse matrix, random vectors per case
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((i, i, 3.0));
            triplets.push((i, (i + 7) % n, -0.5));
            triplets.push((i, (i + 13) % n, 0.25));
        }
        run_vector_property(n, 2, |ctx, map| {
            let mut a = DistMatrix::new(Arc::clone(&map));
            for &(r, c, v) in &triplets {
                if map.owns(r) {
                    a.add(r, c, v)?;
                }
            }
            a.assemble(ctx)?;
            let lo = map.offsets()[ctx.rank()];
            let xs: Vec<f64> = (0..map.nlocal())
                .map(|l| (((lo + l) as f64 + seed as f64) * 0.7).sin())
                .collect();
            let ys: Vec<f64> = (0..map.nlocal())
                .map(|l| (((lo + l) as f64) * 0.3 + seed as f64).cos())
                .collect();
            let x = DistVector::from_owned(Arc::clone(&map), xs)?;
            let y = DistVector::from_owned(Arc::clone(&map), ys)?;
            let (alpha, beta) = (1.25, -0.75);
            // A(alpha x + beta y) vs alpha A x + beta A y
            let mut combo = DistVector::zeros(Arc::clone(&map));
            axpbyz(alpha, &x, beta, &y, &mut combo)?;
            let mut left = DistVector::zeros(Arc::clone(&map));
            a.spmv(ctx, 1.0, &combo, 0.0, &mut left)?;
            let mut ax = DistVector::zeros(Arc::clone(&map));
            a.spmv(ctx, 1.0, &x, 0.0, &mut ax)?;
            let mut right = DistVector::zeros(Arc::clone(&map));
            a.spmv(ctx, beta, &y, 0.0, &mut right)?;
            for i in 0..map.nlocal() {
                let want = alpha * ax.owned()[i] + right.owned()[i];
                let got = left.owned()[i];
                assert!(
                    (got - want).abs() <= 1e-13 * want.abs().max(1.0),
                    "{got} vs {want}"
                );
            }
            Ok(())
        });
    }

    #[test]
    fn mulvec_matches_dense(rows in 1usize..8, cols in 1usize..8, seed in 0u64..100) {
        let mut entries = Vec::new();
        let mut s = seed;
        for r in 0..rows {
            for c in 0..cols {
                s = s.wrapping_mul(48271).wrapping_add(11);
                if s % 3 == 0 {
                    entries.push((r, c, (s % 17) as f64 - 8.0));
                }
            }
        }
        let a = CsrMatrix::from_triplets(rows, cols, &entries).unwrap();
        let x: Vec<f64> = (0..cols).map(|c| c as f64 + 0.5).collect();
        let got = a.mul_vec(&x);
        let dense = a.to_dense();
        for r in 0..rows {
            let mut want = 0.0;
            for c in 0..cols {
                want += dense[r * cols + c] * x[c];
            }
            prop_assert!((got[r] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }
}
