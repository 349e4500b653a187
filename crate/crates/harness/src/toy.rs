//! Two-blob toy problem whose second view is a sheared, rotated copy of the first.

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Labels, MultiViewDataset};
use mvml::kernels::KernelPolicy;

pub const DEFAULT_SHEAR: f64 = 1.0;
pub const DEFAULT_ANGLE: f64 = std::f64::consts::FRAC_PI_6;

const CENTER: f64 = 1.5;
const SPREAD: f64 = 0.5;

/// `R(angle) · S(shear)` with `S = [[1, shear], [0, 1]]`.
pub fn view_map(shear: f64, angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c) * Matrix2::new(1.0, shear, 0.0, 1.0)
}

/// `n_per_class` points around `(−1.5, −1.5)` (class 0) and `(1.5, 1.5)`
/// (class 1), standard deviation 0.5, class 0 first. View 2 is view 1 pushed
/// through [`view_map`]. Both views use linear kernels.
pub fn toy_generate(n_per_class: usize, seed: u64, shear: f64, angle: f64) -> MultiViewDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, SPREAD).expect("valid normal");
    let n = 2 * n_per_class;
    let map = view_map(shear, angle);
    let mut v1 = DMatrix::zeros(n, 2);
    let mut v2 = DMatrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i >= n_per_class) as i64;
        let c = if class == 1 { CENTER } else { -CENTER };
        let x = Vector2::new(c + noise.sample(&mut rng), c + noise.sample(&mut rng));
        let z = map * x;
        v1.set_row(i, &x.transpose());
        v2.set_row(i, &z.transpose());
        labels.push(class);
    }
    MultiViewDataset {
        views: vec![v1, v2],
        labels: Labels::Classes(labels),
        view_names: vec!["original".into(), "transformed".into()],
        kernels: vec![KernelPolicy::Linear; 2],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_map_copies_view() {
        let d = toy_generate(5, 1, 0.0, 0.0);
        assert_eq!(d.views[0], d.views[1]);
    }

    #[test]
    fn quarter_turn() {
        let z = view_map(0.0, std::f64::consts::FRAC_PI_2) * Vector2::new(1.0, 0.0);
        assert!((z - Vector2::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn seeded() {
        let a = toy_generate(10, 7, DEFAULT_SHEAR, DEFAULT_ANGLE);
        let b = toy_generate(10, 7, DEFAULT_SHEAR, DEFAULT_ANGLE);
        assert_eq!(a, b);
        assert_ne!(a, toy_generate(10, 8, DEFAULT_SHEAR, DEFAULT_ANGLE));
        assert_eq!(a.n(), 20);
    }
}
