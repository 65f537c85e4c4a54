//! Randomized property tests over the numeric building blocks.

mod common;

use proptest::prelude::*;

use neurbf_core::grid::HashGridEncoder;
use neurbf_core::imageio::psnr;
use neurbf_core::kdtree::KdTree;
use neurbf_core::params::lr_schedule;
use neurbf_core::rbf::{freq_ladder, kernel_iq, normalize};
use neurbf_core::rng::Rng;

fn unit_points(dim: usize, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = Rng::new(seed);
    (0..n * dim).map(|_| rng.uniform(0.0, 1.0)).collect()
}

proptest! {
    #[test]
    fn knn_matches_brute_force(
        seed in 0u64..1000,
        n in 5usize..60,
        dim in 2usize..4,
        k in 1usize..8,
        qx in 0.0f64..1.0,
        qy in 0.0f64..1.0,
        qz in 0.0f64..1.0,
    ) {
        let k = k.min(n);
        let pts = unit_points(dim, n, seed);
        let tree = KdTree::new(dim, &pts).unwrap();
        let q = [qx, qy, qz];
        let got = tree.knn(&q[..dim], k);
        let want = common::brute_knn(dim, &pts, &q[..dim], k);
        prop_assert_eq!(got, want);
    }

    #[test]
    fn normalize_yields_near_partition_of_unity(
        vals in proptest::collection::vec(0.0f64..10.0, 1..12),
    ) {
        let mut v = vals.clone();
        normalize(&mut v);
        let sum: f64 = v.iter().sum();
        prop_assert!(v.iter().all(|x| (0.0..=1.0 + 1e-12).contains(x)));
        prop_assert!(sum <= 1.0 + 1e-12, "normalized sum {sum} above one");
        // With meaningful mass the epsilon guard is negligible.
        if vals.iter().sum::<f64>() >= 1e-6 {
            prop_assert!(sum > 1.0 - 1e-5, "normalized sum {sum} fell short");
        }
    }

    #[test]
    fn normalize_uniform_on_all_zero(k in 1usize..12) {
        let mut v = vec![0.0; k];
        normalize(&mut v);
        for x in &v {
            prop_assert_eq!(*x, 1.0 / k as f64);
        }
    }

    #[test]
    fn freq_ladder_hits_endpoints_monotonically(
        lo in 1e-3f64..10.0,
        ratio in 1.01f64..10_000.0,
        n in 2usize..64,
    ) {
        let hi = lo * ratio;
        let m = freq_ladder(lo, hi, n).unwrap();
        prop_assert_eq!(m.len(), n);
        prop_assert_eq!(m[0], lo);
        prop_assert_eq!(m[n - 1], hi);
        for w in m.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn kernel_peaks_at_center_and_decays(
        seed in 0u64..1000,
        dim in 2usize..4,
        ux in -1.0f64..1.0,
        uy in -1.0f64..1.0,
        uz in -1.0f64..1.0,
        t in 0.01f64..2.0,
    ) {
        let mut rng = Rng::new(seed);
        let packed = common::random_spd_packed(dim, &mut rng, 30.0);
        let c = [0.3, 0.6, 0.4];
        let mut u = [ux, uy, uz];
        let norm = (u[..dim].iter().map(|v| v * v).sum::<f64>()).sqrt();
        prop_assume!(norm > 1e-3);
        u.iter_mut().for_each(|v| *v /= norm);

        prop_assert_eq!(kernel_iq(dim, &c[..dim], &c[..dim], &packed), 1.0);
        let mut near = [0.0; 3];
        let mut far = [0.0; 3];
        for d in 0..dim {
            near[d] = c[d] + t * u[d];
            far[d] = c[d] + 2.0 * t * u[d];
        }
        let phi_near = kernel_iq(dim, &near[..dim], &c[..dim], &packed);
        let phi_far = kernel_iq(dim, &far[..dim], &c[..dim], &packed);
        prop_assert!(phi_near > 0.0 && phi_near <= 1.0);
        prop_assert!(phi_far < phi_near, "kernel must decay along rays");
    }

    #[test]
    fn psnr_decreases_with_noise_amplitude(
        seed in 0u64..1000,
        n in 8usize..64,
    ) {
        let mut rng = Rng::new(seed);
        let a: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 1.0)).collect();
        let noise: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        prop_assume!(noise.iter().any(|v| v.abs() > 1e-3));
        prop_assert_eq!(psnr(&a, &a), f64::INFINITY);
        let mut last = f64::INFINITY;
        for amp in [0.01, 0.02, 0.04, 0.08] {
            let b: Vec<f64> = a.iter().zip(&noise).map(|(x, d)| x + amp * d).collect();
            let p = psnr(&a, &b);
            prop_assert!(p < last, "amplitude {amp}: psnr {p} did not drop below {last}");
            last = p;
        }
    }

    #[test]
    fn lr_schedule_decays_tenfold(
        lr in 1e-6f64..1.0,
        total in 1usize..100_000,
    ) {
        prop_assert_eq!(lr_schedule(0, total, lr), lr);
        let end = lr_schedule(total, total, lr);
        prop_assert!((end / lr - 0.1).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for i in 0..=4 {
            let step = total * i / 4;
            let v = lr_schedule(step, total, lr);
            prop_assert!(v <= prev);
            prev = v;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_interp_is_continuous_at_cell_boundaries(
        seed in 0u64..1000,
        j in 1u32..32,
        y in 0.0f64..1.0,
    ) {
        let enc = HashGridEncoder::new(2, 4, 4, 32, 2, 1 << 8).unwrap();
        let mut rng = Rng::new(seed);
        let tables: Vec<f64> = (0..enc.table_len()).map(|_| rng.uniform(-1.0, 1.0)).collect();
        // A node line of the finest level is a cell boundary for it and,
        // being a multiple of coarser spacings only sometimes, a generic
        // continuity probe for the rest.
        let b = j as f64 / 32.0;
        let eps = 1e-10;
        let mut lo = vec![0.0; enc.out_dim()];
        let mut hi = vec![0.0; enc.out_dim()];
        enc.interp(&[b - eps, y], &tables, &mut lo);
        enc.interp(&[b + eps, y], &tables, &mut hi);
        for (l, h) in lo.iter().zip(&hi) {
            prop_assert!((l - h).abs() < 1e-6, "jump at boundary: {l} vs {h}");
        }
    }

    #[test]
    fn grid_dense_one_hot_reproduces_itself(
        nx in 0u32..5,
        ny in 0u32..5,
        ch in 0usize..2,
    ) {
        // Power-of-two ladder keeps node coordinates exactly representable.
        let enc = HashGridEncoder::new(2, 4, 4, 32, 2, 1 << 12).unwrap();
        prop_assert!(enc.levels[0].dense);
        let res = enc.levels[0].res;
        prop_assume!(nx <= res && ny <= res);
        let row = enc.levels[0].offset + enc.hash_index(0, &[nx, ny]);
        let mut tables = vec![0.0; enc.table_len()];
        tables[row * enc.channels + ch] = 1.0;
        let x = [nx as f64 / res as f64, ny as f64 / res as f64];
        let mut out = vec![0.0; enc.out_dim()];
        enc.interp(&x, &tables, &mut out);
        for (i, v) in out.iter().enumerate() {
            if i == ch {
                prop_assert_eq!(*v, 1.0, "node value must interpolate exactly");
            } else {
                prop_assert_eq!(*v, 0.0);
            }
        }
    }
}
