//! Dense symmetric linear-algebra helpers shared by the solver and the
//! Nyström factorization.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{MvmlError, Result};

/// Relative spectral cutoff used wherever a pseudo-inverse appears.
pub const PINV_RTOL: f64 = 1e-10;

/// Returns `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = m.clone();
    let n = s.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// Eigendecomposition of the symmetric part of `m`.
pub fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(m))
}

/// Spectral pseudo-inverse of a symmetric matrix together with the
/// eigendecomposition it came from.
#[derive(Debug, Clone)]
pub struct SymPinv {
    pub pinv: DMatrix<f64>,
    pub min_eigenvalue: f64,
    pub max_abs_eigenvalue: f64,
    pub rank: usize,
    /// Eigenvectors spanning the range (the kept eigenvalues), `n × rank`.
    pub range: DMatrix<f64>,
    /// Kept eigenvalues, matching the columns of `range`.
    pub range_values: DVector<f64>,
}

/// Pseudo-inverse of a symmetric matrix: eigenvalues with
/// `|λ| <= rtol · max|λ|` are treated as zero.
pub fn pinv_sym(m: &DMatrix<f64>, rtol: f64) -> SymPinv {
    let n = m.nrows();
    if n == 0 {
        return SymPinv {
            pinv: DMatrix::zeros(0, 0),
            min_eigenvalue: 0.0,
            max_abs_eigenvalue: 0.0,
            rank: 0,
            range: DMatrix::zeros(0, 0),
            range_values: DVector::zeros(0),
        };
    }
    let eig = sym_eigen(m);
    let max_abs = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let min_ev = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let cut = rtol * max_abs;
    let mut scaled = eig.eigenvectors.clone();
    let mut kept = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let inv = if lam.abs() > cut && max_abs > 0.0 {
            kept.push(k);
            1.0 / lam
        } else {
            0.0
        };
        scaled.column_mut(k).scale_mut(inv);
    }
    let pinv = symmetrize(&(scaled * eig.eigenvectors.transpose()));
    SymPinv {
        pinv,
        min_eigenvalue: min_ev,
        max_abs_eigenvalue: max_abs,
        rank: kept.len(),
        range: eig.eigenvectors.select_columns(&kept),
        range_values: eig.eigenvalues.select_rows(&kept),
    }
}

/// Solves the symmetric positive (semi)definite system `mat · x = rhs`.
///
/// Cholesky first; on failure a `1e-12 · trace` diagonal jitter is added and
/// the factorization retried. Two rounds of iterative refinement against the
/// unjittered matrix follow.
pub fn solve_spd(mat: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let n = mat.nrows();
    if rhs.len() != n || mat.ncols() != n {
        return Err(MvmlError::Input(format!(
            "system is {}x{} but rhs has length {}",
            mat.nrows(),
            mat.ncols(),
            rhs.len()
        )));
    }
    let sym = symmetrize(mat);
    let chol = match sym.clone().cholesky() {
        Some(c) => c,
        None => {
            let jitter = 1e-12 * sym.trace().abs().max(f64::MIN_POSITIVE);
            let mut jittered = sym.clone();
            for i in 0..n {
                jittered[(i, i)] += jitter;
            }
            jittered.cholesky().ok_or_else(|| {
                MvmlError::Numerical(format!(
                    "system matrix ({n}x{n}) is not positive definite even after a {jitter:e} jitter"
                ))
            })?
        }
    };
    let mut x = chol.solve(rhs);
    for _ in 0..2 {
        let r = rhs - &sym * &x;
        x += chol.solve(&r);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(MvmlError::Numerical(
            "non-finite solution of linear system".into(),
        ));
    }
    Ok(x)
}

/// Minimum-norm least-squares solution of `z · w ≈ y` via the SVD.
pub fn lstsq(z: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = z.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (PINV_RTOL * smax).max(f64::MIN_POSITIVE);
    svd.solve(y, eps)
        .map_err(|e| MvmlError::Numerical(format!("least-squares solve failed: {e}")))
}

/// Squared Frobenius norm.
pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Largest absolute entry-wise difference relative to `max(1, max|b|)`.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    (a - b).amax() / scale
}
