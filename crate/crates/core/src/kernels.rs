//! Scalar kernels, Gram matrices and bandwidth heuristics.
//!
//! Point sets are `n × d` matrices with one sample per row.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{input, MvmlError, Result};

/// Rows above which Gram construction is spread over the rayon pool.
const PARALLEL_ROWS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Gaussian,
    Linear,
}

/// A scalar kernel on one view.
///
/// `sigma` is the Gaussian bandwidth, `k(x, z) = exp(-‖x − z‖² / (2σ²))`;
/// it is ignored by the linear kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub sigma: f64,
}

impl KernelConfig {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let cfg = Self {
            family: KernelFamily::Gaussian,
            sigma,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn linear() -> Self {
        Self {
            family: KernelFamily::Linear,
            sigma: 1.0,
        }
    }

    /// Gaussian kernel parameterised by `γ = 1 / (2σ²)`.
    pub fn gaussian_gamma(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(MvmlError::Config(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        Self::gaussian((1.0 / (2.0 * gamma)).sqrt())
    }

    pub fn gamma(&self) -> f64 {
        1.0 / (2.0 * self.sigma * self.sigma)
    }

    pub fn validate(&self) -> Result<()> {
        if self.family == KernelFamily::Gaussian && !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(MvmlError::Config(format!(
                "gaussian bandwidth must be positive and finite, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    #[inline]
    fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Gaussian => {
                let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * self.sigma * self.sigma)).exp()
            }
            KernelFamily::Linear => x.iter().zip(z).map(|(a, b)| a * b).sum(),
        }
    }
}

/// How the bandwidth of a view's Gaussian kernel is chosen from data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthPolicy {
    /// `σ = (1/n²) Σ_{i,j} ‖x_i − x_j‖`.
    MeanDistance,
    /// `γ = 1 / d` for `d` input features.
    InverseFeatures,
    Fixed(f64),
}

/// Per-view kernel choice before it is resolved against the training data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelPolicy {
    Linear,
    Gaussian(BandwidthPolicy),
}

impl KernelPolicy {
    pub fn resolve(&self, points: &DMatrix<f64>) -> Result<KernelConfig> {
        match self {
            KernelPolicy::Linear => Ok(KernelConfig::linear()),
            KernelPolicy::Gaussian(BandwidthPolicy::Fixed(s)) => KernelConfig::gaussian(*s),
            KernelPolicy::Gaussian(BandwidthPolicy::MeanDistance) => {
                KernelConfig::gaussian(mean_distance_sigma(points)?)
            }
            KernelPolicy::Gaussian(BandwidthPolicy::InverseFeatures) => {
                if points.ncols() == 0 {
                    return input("cannot derive a bandwidth from zero features");
                }
                KernelConfig::gaussian_gamma(1.0 / points.ncols() as f64)
            }
        }
    }
}

pub fn eval_kernel(cfg: &KernelConfig, x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != z.len() {
        return input(format!(
            "kernel arguments have dimensions {} and {}",
            x.len(),
            z.len()
        ));
    }
    cfg.validate()?;
    Ok(cfg.eval_unchecked(x, z))
}

/// Square Gram matrix of a point set. Symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(DMatrix<f64>);

impl GramMatrix {
    /// Wraps an existing matrix after checking it is square and symmetric.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return input(format!(
                "gram matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            ));
        }
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if (a - b).abs() > 1e-12 * a.abs().max(1.0) || !a.is_finite() {
                    return input(format!("gram matrix is not symmetric at ({i}, {j})"));
                }
            }
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// Samples as contiguous columns: column `i` is point `i`.
fn as_columns(points: &DMatrix<f64>) -> DMatrix<f64> {
    points.transpose()
}

pub fn gram(cfg: &KernelConfig, points: &DMatrix<f64>) -> Result<GramMatrix> {
    let n = points.nrows();
    if n == 0 {
        return input("gram of an empty point set");
    }
    cfg.validate()?;
    let cols = as_columns(points);
    let row = |i: usize| -> Vec<f64> {
        let xi = cols.column(i);
        (i..n)
            .map(|j| cfg.eval_unchecked(xi.as_slice(), cols.column(j).as_slice()))
            .collect()
    };
    let upper: Vec<Vec<f64>> = if n >= PARALLEL_ROWS {
        (0..n).into_par_iter().map(row).collect()
    } else {
        (0..n).map(row).collect()
    };
    let mut k = DMatrix::zeros(n, n);
    for (i, r) in upper.iter().enumerate() {
        for (off, &v) in r.iter().enumerate() {
            k[(i, i + off)] = v;
            k[(i + off, i)] = v;
        }
    }
    Ok(GramMatrix(k))
}

/// `m × n` matrix of kernel values between test rows and train rows.
pub fn cross_gram(
    cfg: &KernelConfig,
    test: &DMatrix<f64>,
    train: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if test.ncols() != train.ncols() {
        return input(format!(
            "test points have dimension {} but training points have {}",
            test.ncols(),
            train.ncols()
        ));
    }
    cfg.validate()?;
    let (m, n) = (test.nrows(), train.nrows());
    let tc = as_columns(test);
    let rc = as_columns(train);
    let row = |i: usize| -> Vec<f64> {
        let xi = tc.column(i);
        (0..n)
            .map(|j| cfg.eval_unchecked(xi.as_slice(), rc.column(j).as_slice()))
            .collect()
    };
    let rows: Vec<Vec<f64>> = if m * n >= PARALLEL_ROWS * PARALLEL_ROWS {
        (0..m).into_par_iter().map(row).collect()
    } else {
        (0..m).map(row).collect()
    };
    Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
}

/// Mean pairwise Euclidean distance over all `n²` ordered pairs, diagonal
/// zeros included.
pub fn mean_distance_sigma(points: &DMatrix<f64>) -> Result<f64> {
    let n = points.nrows();
    if n < 2 {
        return Err(MvmlError::DegenerateBandwidth(format!(
            "need at least two points, got {n}"
        )));
    }
    let cols = as_columns(points);
    let mut total = 0.0;
    for i in 0..n {
        let xi = cols.column(i);
        for j in (i + 1)..n {
            total += 2.0 * (xi - cols.column(j)).norm();
        }
    }
    let sigma = total / (n * n) as f64;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(MvmlError::DegenerateBandwidth(
            "all points coincide; mean distance is zero".into(),
        ));
    }
    Ok(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn gaussian_self_similarity_is_one() {
        let cfg = KernelConfig::gaussian(1.0).unwrap();
        assert_eq!(eval_kernel(&cfg, &[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_unit_squared_distance_two() {
        let cfg = KernelConfig::gaussian(1.0).unwrap();
        let v = eval_kernel(&cfg, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn linear_is_dot_product() {
        let v = eval_kernel(&KernelConfig::linear(), &[1.0, 2.0], &[3.0, -1.0]).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let e = eval_kernel(&KernelConfig::linear(), &[1.0], &[1.0, 2.0]).unwrap_err();
        assert!(matches!(e, MvmlError::Input(_)));
        let e =
            cross_gram(&KernelConfig::linear(), &dmatrix![1.0], &dmatrix![1.0, 2.0]).unwrap_err();
        assert!(matches!(e, MvmlError::Input(_)));
    }

    #[test]
    fn invalid_bandwidth_rejected() {
        assert!(KernelConfig::gaussian(0.0).is_err());
        assert!(KernelConfig::gaussian(f64::NAN).is_err());
        assert!(KernelConfig::gaussian_gamma(-1.0).is_err());
    }

    #[test]
    fn gram_single_point() {
        let cfg = KernelConfig::gaussian(0.7).unwrap();
        let k = gram(&cfg, &dmatrix![4.0, -1.0]).unwrap();
        assert_eq!(k.matrix(), &dmatrix![1.0]);
    }

    #[test]
    fn gram_linear_identity_rows() {
        let k = gram(&KernelConfig::linear(), &dmatrix![1.0, 0.0; 0.0, 1.0]).unwrap();
        assert_eq!(k.matrix(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn gram_gaussian_one_dimensional_pair() {
        let cfg = KernelConfig::gaussian(1.0).unwrap();
        let k = gram(&cfg, &dmatrix![0.0; 2f64.sqrt()]).unwrap();
        // exponent: -(√2)² / 2 = -1
        assert!((k.matrix()[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(k.matrix()[(0, 1)], k.matrix()[(1, 0)]);
    }

    #[test]
    fn gram_of_empty_set_fails() {
        assert!(gram(&KernelConfig::linear(), &DMatrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn cross_gram_examples() {
        let cfg = KernelConfig::gaussian(1.3).unwrap();
        let train = dmatrix![0.0, 1.0; 2.0, -1.0; 0.5, 0.5];
        assert_eq!(
            cross_gram(&cfg, &train, &train).unwrap(),
            gram(&cfg, &train).unwrap().into_matrix()
        );

        let test = dmatrix![2.0, -1.0];
        let c = cross_gram(&cfg, &test, &train).unwrap();
        assert_eq!(c[(0, 1)], 1.0);

        let c = cross_gram(
            &KernelConfig::linear(),
            &dmatrix![2.0, 0.0],
            &dmatrix![1.0, 0.0; 0.0, 1.0],
        )
        .unwrap();
        assert_eq!(c, dmatrix![2.0, 0.0]);
    }

    #[test]
    fn mean_distance_two_points() {
        assert_eq!(mean_distance_sigma(&dmatrix![0.0; 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn mean_distance_single_separated_pair_matches_double_loop() {
        // five points at the origin, one at (3, 4)
        let mut pts = DMatrix::zeros(6, 2);
        pts[(5, 0)] = 3.0;
        pts[(5, 1)] = 4.0;
        let mut brute = 0.0f64;
        for i in 0..6 {
            for j in 0..6 {
                brute += (pts.row(i) - pts.row(j)).norm();
            }
        }
        brute /= 36.0;
        assert!((brute - 50.0 / 36.0).abs() < 1e-15);
        assert!((mean_distance_sigma(&pts).unwrap() - brute).abs() < 1e-14);
    }

    #[test]
    fn mean_distance_degenerate() {
        let e = mean_distance_sigma(&dmatrix![1.0, 1.0; 1.0, 1.0; 1.0, 1.0]).unwrap_err();
        assert!(matches!(e, MvmlError::DegenerateBandwidth(_)));
        assert!(mean_distance_sigma(&dmatrix![1.0, 2.0]).is_err());
    }

    #[test]
    fn policies_resolve() {
        let pts = dmatrix![0.0, 0.0; 2.0, 0.0];
        let k = KernelPolicy::Gaussian(BandwidthPolicy::MeanDistance)
            .resolve(&pts)
            .unwrap();
        assert_eq!(k.sigma, 1.0);
        let k = KernelPolicy::Gaussian(BandwidthPolicy::InverseFeatures)
            .resolve(&pts)
            .unwrap();
        assert!((k.gamma() - 0.5).abs() < 1e-15);
        assert_eq!(
            KernelPolicy::Linear.resolve(&pts).unwrap().family,
            KernelFamily::Linear
        );
    }
}
