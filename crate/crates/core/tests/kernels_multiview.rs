mod common;

use common::*;
use mvml::kernels::{cross_gram, eval_kernel, gram, KernelConfig};
use mvml::multiview::{assemble_k, group_layout, preset_metric_cov, BlockDiag, Group};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn kernel_strategy() -> impl Strategy<Value = KernelConfig> {
    prop_oneof![
        Just(KernelConfig::linear()),
        (0.05f64..5.0).prop_map(|s| KernelConfig::gaussian(s).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_matches_pairwise_evaluation(seed: u64, n in 1usize..20, d in 1usize..5, cfg in kernel_strategy()) {
        let x = uniform(&mut rng(seed), n, d);
        let k = gram(&cfg, &x).unwrap();
        for i in 0..n {
            for j in 0..n {
                let xi: Vec<f64> = x.row(i).iter().copied().collect();
                let xj: Vec<f64> = x.row(j).iter().copied().collect();
                let e = eval_kernel(&cfg, &xi, &xj).unwrap();
                prop_assert!((k.matrix()[(i, j)] - e).abs() <= 1e-14 * e.abs().max(1.0));
            }
        }
    }

    #[test]
    fn gram_is_symmetric_psd(seed: u64, n in 1usize..25, cfg in kernel_strategy()) {
        let x = uniform(&mut rng(seed), n, 3);
        let k = gram(&cfg, &x).unwrap().into_matrix();
        prop_assert_eq!(&k, &k.transpose());
        let scale = k.amax().max(1.0);
        prop_assert!(min_eig(&k) >= -1e-12 * scale * n as f64);
    }

    #[test]
    fn gram_permutation_equivariance(seed: u64, n in 2usize..15, cfg in kernel_strategy()) {
        let mut r = rng(seed);
        let x = uniform(&mut r, n, 2);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut r);
        let k = gram(&cfg, &x).unwrap().into_matrix();
        let kp = gram(&cfg, &x.select_rows(&perm)).unwrap().into_matrix();
        let expected = DMatrix::from_fn(n, n, |i, j| k[(perm[i], perm[j])]);
        prop_assert!((kp - expected).amax() <= 1e-14 * k.amax().max(1.0));
    }

    #[test]
    fn cross_gram_of_training_set_is_gram(seed: u64, n in 1usize..15, cfg in kernel_strategy()) {
        let x = uniform(&mut rng(seed), n, 3);
        let k = gram(&cfg, &x).unwrap().into_matrix();
        let c = cross_gram(&cfg, &x, &x).unwrap();
        prop_assert!((&k - &c).amax() <= 1e-14 * c.amax().max(1.0));
    }

    #[test]
    fn assemble_k_matches_dense_hah(seed: u64, n in 1usize..8, v in 1usize..4) {
        let mut r = rng(seed);
        let (_, h) = random_stack(&mut r, n, v);
        let a = random_metric(&mut r, n, v);
        let hd = dense_blockdiag(h.as_block_diag().blocks());
        let expected = &hd * a.entries() * &hd;
        let k = assemble_k(&h, &a).unwrap();
        prop_assert!(rel_err(&k, &expected) < 1e-12);
    }

    #[test]
    fn assembled_kernel_is_psd_for_psd_metric(seed: u64, n in 1usize..8, v in 1usize..4) {
        let mut r = rng(seed);
        let (_, h) = random_stack(&mut r, n, v);
        let a = random_metric(&mut r, n, v);
        let k = assemble_k(&h, &a).unwrap();
        prop_assert!(min_eig(&k) >= -1e-10 * k.amax().max(1.0));
    }

    #[test]
    fn group_norms_partition_frobenius(seed: u64, n in 1usize..6, v in 1usize..5) {
        let a = random_metric(&mut rng(seed), n, v);
        let layout = group_layout(v).unwrap();
        prop_assert_eq!(layout.groups().len(), v + v * (v - 1) / 2);
        let total: f64 = layout.groups().iter().map(|g| a.group_frobenius(g).unwrap().powi(2)).sum();
        prop_assert!((total - a.frobenius_sq()).abs() < 1e-12 * a.frobenius_sq());
    }

    #[test]
    fn blockdiag_apply_matches_dense(seed: u64, rows in 1usize..6, cols in 1usize..6, v in 1usize..4) {
        let mut r = rng(seed);
        let blocks: Vec<_> = (0..v).map(|_| uniform(&mut r, rows, cols)).collect();
        let b = BlockDiag::new(blocks.clone()).unwrap();
        let x = uniform_vec(&mut r, cols * v);
        let dense = dense_blockdiag(&blocks);
        prop_assert!(rel_err_v(&b.apply(&x).unwrap(), &(&dense * &x)) < 1e-13);
        prop_assert_eq!(b.to_dense(), dense);
        let w = uniform_vec(&mut r, v);
        let combined = b.combined(&w).unwrap();
        prop_assert!(rel_err(&combined, &(dense_combiner(&w, rows) * dense_blockdiag(&blocks))) < 1e-13);
    }
}

#[test]
fn cov_preset_kernel_is_sum_outer_product() {
    // With every block I/n, K_lm = K_l K_m / n.
    let mut r = rng(3);
    let (_, h) = random_stack(&mut r, 5, 3);
    let a = preset_metric_cov(&h);
    let k = assemble_k(&h, &a).unwrap();
    for l in 0..3 {
        for m in 0..3 {
            let blk = k.view((l * 5, m * 5), (5, 5)).into_owned();
            let expected = h.block(l) * h.block(m) / 5.0;
            assert!(rel_err(&blk, &expected) < 1e-13);
        }
    }
    assert!(group_layout(3).unwrap().contains(&Group::Pair(0, 2)));
}
