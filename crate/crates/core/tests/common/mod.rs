#![allow(dead_code)]

use mvml::kernels::KernelConfig;
use mvml::multiview::{build_gram_stack, GramStack, MetricMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Random symmetric positive definite matrix with eigenvalues at least `floor`.
pub fn random_pd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let x = uniform(rng, n, n);
    &x * x.transpose() / n as f64 + DMatrix::identity(n, n) * floor
}

/// `v` random views of `n` points in `d` dimensions.
pub fn random_views(rng: &mut ChaCha8Rng, n: usize, v: usize, d: usize) -> Vec<DMatrix<f64>> {
    (0..v).map(|_| uniform(rng, n, d)).collect()
}

pub fn gaussian_kernels(v: usize, sigma: f64) -> Vec<KernelConfig> {
    vec![KernelConfig::gaussian(sigma).unwrap(); v]
}

pub fn random_stack(rng: &mut ChaCha8Rng, n: usize, v: usize) -> (Vec<DMatrix<f64>>, GramStack) {
    let views = random_views(rng, n, v, 3);
    let h = build_gram_stack(&views, &gaussian_kernels(v, 0.8)).unwrap();
    (views, h)
}

pub fn random_metric(rng: &mut ChaCha8Rng, block: usize, v: usize) -> MetricMatrix {
    MetricMatrix::new(random_pd(rng, block * v, 0.1), block, v).unwrap()
}

/// Dense `blockdiag(blocks)`.
pub fn dense_blockdiag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), b.shape()).copy_from(b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

/// Dense `wᵀ ⊗ I_n`.
pub fn dense_combiner(w: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, n * w.len());
    for (l, wl) in w.iter().enumerate() {
        for i in 0..n {
            out[(i, l * n + i)] = *wl;
        }
    }
    out
}

/// Plain inverse, for oracles on well-conditioned matrices.
pub fn inv(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("invertible")
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn rel_err_v(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.min()
}
