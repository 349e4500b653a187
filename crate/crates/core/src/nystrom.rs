//! Block-wise Nyström factorization `K_l ≈ Q_l W_l† Q_lᵀ = U_l U_lᵀ`.
//!
//! All views share one anchor set, drawn as the prefix of a seeded random
//! permutation of the sample indices, so that the factored blocks stay
//! aligned sample-by-sample across views.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{input, MvmlError, Result};
use crate::kernels::{cross_gram, KernelConfig};
use crate::linalg::{sym_eigen, symmetrize};
use crate::multiview::{BlockDiag, GramStack};

/// `(W†)^{1/2}` of a symmetric PSD matrix.
///
/// Eigenvalues at or below `tol · λ_max` are dropped. Eigenvalues more
/// negative than `−tol · ‖W‖` mean the input is not PSD and are reported.
pub fn pinv_sqrt(w: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if !w.is_square() {
        return input(format!("expected a square matrix, got {:?}", w.shape()));
    }
    if w.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = sym_eigen(w);
    let norm = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if let Some(bad) = eig.eigenvalues.iter().find(|&&l| l < -tol * norm) {
        return Err(MvmlError::Numerical(format!(
            "matrix is indefinite: eigenvalue {bad:e} below -{tol:e}·{norm:e}"
        )));
    }
    let cut = tol * norm;
    let mut scaled = eig.eigenvectors.clone();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let f = if lam > cut { lam.sqrt().recip() } else { 0.0 };
        scaled.column_mut(k).scale_mut(f);
    }
    Ok(symmetrize(&(scaled * eig.eigenvectors.transpose())))
}

/// Returns `(U_l, (W_l†)^{1/2})` for one view's Gram matrix.
pub fn factorize_view(
    k: &DMatrix<f64>,
    anchors: &[usize],
    tol: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = k.nrows();
    check_anchors(anchors, n)?;
    let p = anchors.len();
    let q = DMatrix::from_fn(n, p, |i, j| k[(i, anchors[j])]);
    let w = DMatrix::from_fn(p, p, |i, j| k[(anchors[i], anchors[j])]);
    let w_pinv_sqrt = pinv_sqrt(&w, tol)?;
    Ok((q * &w_pinv_sqrt, w_pinv_sqrt))
}

fn check_anchors(anchors: &[usize], n: usize) -> Result<()> {
    if anchors.is_empty() {
        return input("at least one anchor is required");
    }
    let mut seen = vec![false; n];
    for &a in anchors {
        if a >= n {
            return input(format!("anchor index {a} out of range for {n} samples"));
        }
        if std::mem::replace(&mut seen[a], true) {
            return input(format!("duplicate anchor index {a}"));
        }
    }
    Ok(())
}

/// Landmark count for an approximation level given as a fraction of `n`.
pub fn landmark_count(fraction: f64, n: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(MvmlError::Config(format!(
            "approximation fraction must lie in (0, 1], got {fraction}"
        )));
    }
    Ok(((fraction * n as f64).round() as usize).clamp(1, n.max(1)))
}

/// First `p` entries of a seeded uniform permutation of `0..n`.
pub fn sample_anchors(n: usize, p: usize, seed: u64) -> Result<Vec<usize>> {
    if p == 0 || p > n {
        return input(format!("cannot draw {p} anchors from {n} samples"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(p);
    Ok(idx)
}

/// One view's factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewFactor {
    /// `U_l`, `n × p`.
    pub u: DMatrix<f64>,
    /// `(W_l†)^{1/2}`, `p × p`.
    pub w_pinv_sqrt: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NystromFactors {
    pub views: Vec<ViewFactor>,
    pub anchor_indices: Vec<usize>,
    pub permutation_seed: u64,
}

impl NystromFactors {
    /// Factorizes every view of `h` on the same `p` anchors.
    pub fn compute(h: &GramStack, p: usize, seed: u64, tol: f64) -> Result<Self> {
        let anchors = sample_anchors(h.n(), p, seed)?;
        Self::with_anchors(h, anchors, seed, tol)
    }

    pub fn with_anchors(h: &GramStack, anchors: Vec<usize>, seed: u64, tol: f64) -> Result<Self> {
        let views = (0..h.views())
            .map(|l| {
                factorize_view(h.block(l), &anchors, tol)
                    .map(|(u, w_pinv_sqrt)| ViewFactor { u, w_pinv_sqrt })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            views,
            anchor_indices: anchors,
            permutation_seed: seed,
        })
    }

    pub fn p(&self) -> usize {
        self.anchor_indices.len()
    }

    /// `U = blockdiag(U_1, …, U_v)`.
    pub fn build_u(&self) -> Result<BlockDiag> {
        let p = self.p();
        if let Some((l, f)) = self
            .views
            .iter()
            .enumerate()
            .find(|(_, f)| f.u.ncols() != p)
        {
            return input(format!(
                "view {l} has {} landmark columns, expected {p}",
                f.u.ncols()
            ));
        }
        BlockDiag::new(self.views.iter().map(|f| f.u.clone()).collect())
    }

    /// Training rows at the anchor indices, for each view.
    pub fn anchor_points(&self, views: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        views
            .iter()
            .map(|x| x.select_rows(&self.anchor_indices))
            .collect()
    }
}

/// `Q^test (W†)^{1/2}` with `Q^test` the test-versus-anchor kernel matrix.
pub fn test_factor(
    cfg: &KernelConfig,
    test_points: &DMatrix<f64>,
    anchor_points: &DMatrix<f64>,
    w_pinv_sqrt: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if w_pinv_sqrt.nrows() != anchor_points.nrows() || !w_pinv_sqrt.is_square() {
        return input(format!(
            "{} anchors but a {:?} factor",
            anchor_points.nrows(),
            w_pinv_sqrt.shape()
        ));
    }
    Ok(cross_gram(cfg, test_points, anchor_points)? * w_pinv_sqrt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::PINV_RTOL;
    use nalgebra::{dmatrix, DVector};

    #[test]
    fn pinv_sqrt_identity() {
        let r = pinv_sqrt(&DMatrix::identity(3, 3), PINV_RTOL).unwrap();
        assert!((r - DMatrix::<f64>::identity(3, 3)).amax() < 1e-15);
    }

    #[test]
    fn pinv_sqrt_drops_null_direction() {
        let r = pinv_sqrt(&dmatrix![4.0, 0.0; 0.0, 0.0], PINV_RTOL).unwrap();
        assert!((r - dmatrix![0.5, 0.0; 0.0, 0.0]).amax() < 1e-15);
    }

    #[test]
    fn pinv_sqrt_rejects_indefinite() {
        let e = pinv_sqrt(&dmatrix![1.0, 0.0; 0.0, -1.0], PINV_RTOL).unwrap_err();
        assert!(e.to_string().contains("-1"));
    }

    #[test]
    fn rank_one_reconstruction_is_exact() {
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let k = &v * v.transpose();
        let (u, _) = factorize_view(&k, &[2], PINV_RTOL).unwrap();
        assert!((&u * u.transpose() - &k).amax() < 1e-12);
    }

    #[test]
    fn identity_gram_keeps_anchor_diagonal_only() {
        let k = DMatrix::<f64>::identity(5, 5);
        let (u, _) = factorize_view(&k, &[3, 1], PINV_RTOL).unwrap();
        let rec = &u * u.transpose();
        let mut expected = DMatrix::zeros(5, 5);
        expected[(3, 3)] = 1.0;
        expected[(1, 1)] = 1.0;
        assert!((rec - expected).amax() < 1e-15);
    }

    #[test]
    fn anchor_validation() {
        let k = DMatrix::<f64>::identity(3, 3);
        assert!(matches!(
            factorize_view(&k, &[0, 0], PINV_RTOL),
            Err(MvmlError::Input(_))
        ));
        assert!(factorize_view(&k, &[3], PINV_RTOL).is_err());
        assert!(factorize_view(&k, &[], PINV_RTOL).is_err());
    }

    #[test]
    fn landmark_counts() {
        assert_eq!(landmark_count(0.5, 200).unwrap(), 100);
        assert_eq!(landmark_count(0.001, 200).unwrap(), 1);
        assert_eq!(landmark_count(1.0, 7).unwrap(), 7);
        assert!(landmark_count(0.0, 10).is_err());
        assert!(landmark_count(1.5, 10).is_err());
    }

    #[test]
    fn anchors_are_seeded_prefixes() {
        let a = sample_anchors(20, 5, 3).unwrap();
        let b = sample_anchors(20, 12, 3).unwrap();
        assert_eq!(a, b[..5]);
        assert_eq!(a, sample_anchors(20, 5, 3).unwrap());
        assert_ne!(a, sample_anchors(20, 5, 4).unwrap());
    }

    #[test]
    fn test_factor_picks_anchor_column() {
        let cfg = KernelConfig::gaussian(0.9).unwrap();
        let anchors = dmatrix![0.0, 0.0; 1.0, 2.0; -1.0, 0.5];
        let q = cross_gram(&cfg, &dmatrix![1.0, 2.0], &anchors).unwrap();
        assert_eq!(q[(0, 1)], 1.0);
        let f = test_factor(
            &cfg,
            &dmatrix![1.0, 2.0],
            &anchors,
            &DMatrix::identity(3, 3),
        )
        .unwrap();
        assert_eq!(f, q);
    }
}
