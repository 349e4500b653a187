//! Alternating minimisation of
//!
//! ```text
//! ‖y − (wᵀ ⊗ I_n) B g‖² + λ ⟨g, A† g⟩ + η R(A)
//! ```
//!
//! over `g`, the combination weights `w` and the block metric `A`, where `B`
//! is either `H = blockdiag(K_l)` (full mode) or the Nyström factor
//! `U = blockdiag(U_l)` (then `g` and `A` live in the `pv`-dimensional
//! factored space). `R(A)` is `‖A‖_F²` for the Frobenius variant and
//! `Σ_γ ‖A_γ‖_F` for the block-sparse variant.
//!
//! Each iteration runs the exact `g` solve, the optional least-squares `w`
//! solve, then one gradient (Frobenius) or proximal-gradient (sparse) step
//! on `A`. The `A` step backtracks by halving `μ` until the objective does
//! not increase, so the recorded objective trace is monotone.

use nalgebra::{DMatrix, DVector};

use crate::error::{input, MvmlError, Result};
use crate::linalg::{lstsq, pinv_sym, solve_spd, symmetrize, SymPinv, PINV_RTOL};
use crate::multiview::{BlockDiag, GramStack, GroupLayout, MetricMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Full,
    Nystrom,
}

/// Starting point for the metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricInit {
    /// `(1/v) I`.
    ScaledIdentity,
    /// Cross-covariance surrogate, `A_lm = I_n / n` (transported to the
    /// factored space as `U_lᵀ U_m / n`).
    PresetCov,
    /// `A_ll = K_l†`, zero off-diagonal (in the factored space the
    /// projector `U_lᵀ (U_l U_lᵀ)† U_l`).
    PresetIdentityBlocks,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// RKHS penalty λ.
    pub lambda: f64,
    /// Metric penalty η.
    pub eta: f64,
    /// Initial step size μ of every metric step.
    pub mu: f64,
    pub max_iters: usize,
    /// Stop once the relative objective decrease over one iteration is below this.
    pub tol: f64,
    pub learn_w: bool,
    /// Block-sparse (group ℓ1/ℓ2) penalty instead of the squared Frobenius norm.
    pub sparse: bool,
    /// `None` means uniform `1/v`.
    pub w_init: Option<DVector<f64>>,
    pub a_init: MetricInit,
    /// `false` keeps the initial metric fixed (preset kernels).
    pub learn_a: bool,
    /// Halvings of μ tried before a metric step is skipped.
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            eta: 1e-2,
            mu: 1e-2,
            max_iters: 200,
            tol: 1e-6,
            learn_w: false,
            sparse: false,
            w_init: None,
            a_init: MetricInit::ScaledIdentity,
            learn_a: true,
            max_backtracks: 40,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, views: usize) -> Result<()> {
        let bad = |m: String| Err(MvmlError::Config(m));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be non-negative, got {}", self.eta));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if self.learn_a && !self.sparse {
            check_frobenius_step(self.mu, self.eta)?;
        }
        if let Some(w) = &self.w_init {
            if w.len() != views {
                return bad(format!("w_init has {} entries for {views} views", w.len()));
            }
        }
        Ok(())
    }
}

fn check_frobenius_step(mu: f64, eta: f64) -> Result<()> {
    if mu * eta >= 0.5 {
        return Err(MvmlError::Config(format!(
            "mu·eta = {} must be below 1/2 for the metric to stay positive definite",
            mu * eta
        )));
    }
    Ok(())
}

/// The operator `B` the solver works against, with its mode.
#[derive(Debug, Clone, Copy)]
pub struct Design<'a> {
    pub basis: &'a BlockDiag,
    pub mode: Mode,
}

impl<'a> Design<'a> {
    pub fn full(h: &'a GramStack) -> Self {
        Self {
            basis: h.as_block_diag(),
            mode: Mode::Full,
        }
    }

    pub fn nystrom(u: &'a BlockDiag) -> Self {
        Self {
            basis: u,
            mode: Mode::Nystrom,
        }
    }

    pub fn initial_metric(&self, init: MetricInit) -> Result<MetricMatrix> {
        let b = self.basis;
        let (n, c, v) = (b.block_rows(), b.block_cols(), b.views());
        match init {
            MetricInit::ScaledIdentity => match self.mode {
                Mode::Full => MetricMatrix::scaled_identity(c, v, 1.0 / v as f64),
                // UᵀA₀U with A₀ = I/v
                Mode::Nystrom => {
                    let mut a = DMatrix::zeros(c * v, c * v);
                    for l in 0..v {
                        let blk = symmetrize(&(b.block(l).transpose() * b.block(l))) / v as f64;
                        a.view_mut((l * c, l * c), (c, c)).copy_from(&blk);
                    }
                    MetricMatrix::new(a, c, v)
                }
            },
            MetricInit::PresetCov => {
                let mut a = DMatrix::zeros(c * v, c * v);
                for l in 0..v {
                    for m in 0..v {
                        let blk = match self.mode {
                            Mode::Full => DMatrix::identity(c, c),
                            Mode::Nystrom => b.block(l).transpose() * b.block(m),
                        } / n as f64;
                        a.view_mut((l * c, m * c), (c, c)).copy_from(&blk);
                    }
                }
                MetricMatrix::new(a, c, v)
            }
            MetricInit::PresetIdentityBlocks => {
                let mut a = DMatrix::zeros(c * v, c * v);
                for l in 0..v {
                    let blk = match self.mode {
                        Mode::Full => pinv_sym(b.block(l), PINV_RTOL).pinv,
                        Mode::Nystrom => {
                            let gram = b.block(l).transpose() * b.block(l);
                            symmetrize(&(pinv_sym(&gram, PINV_RTOL).pinv * gram))
                        }
                    };
                    a.view_mut((l * c, l * c), (c, c)).copy_from(&blk);
                }
                MetricMatrix::new(a, c, v)
            }
        }
    }
}

/// Outcome of an eigenvalue positivity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdReport {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
}

/// `is_psd` holds when no eigenvalue falls below `−tol · max|λ|`.
pub fn check_psd(a: &DMatrix<f64>, tol: f64) -> PsdReport {
    let sp = pinv_sym(a, PINV_RTOL);
    psd_from(&sp, tol)
}

fn psd_from(sp: &SymPinv, tol: f64) -> PsdReport {
    PsdReport {
        is_psd: sp.min_eigenvalue >= -tol * sp.max_abs_eigenvalue,
        min_eigenvalue: sp.min_eigenvalue,
    }
}

/// `Σ_l w_l x_l`, the action of `wᵀ ⊗ I_n` on a stacked vector.
pub fn combiner_apply(w: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    let v = w.len();
    if v == 0 || !x.len().is_multiple_of(v) {
        return input(format!(
            "vector of length {} does not split into {v} views",
            x.len()
        ));
    }
    let n = x.len() / v;
    let mut out = DVector::zeros(n);
    for l in 0..v {
        out.axpy(w[l], &x.rows(l * n, n), 1.0);
    }
    Ok(out)
}

fn check_dims(basis: &BlockDiag, a: &MetricMatrix, g: Option<&DVector<f64>>) -> Result<()> {
    if a.dim() != basis.dim() || a.views() != basis.views() {
        return input(format!(
            "metric is {0}x{0} over {1} views, operator has {2} columns over {3} views",
            a.dim(),
            a.views(),
            basis.dim(),
            basis.views()
        ));
    }
    if let Some(g) = g {
        if g.len() != basis.dim() {
            return input(format!(
                "g has length {}, expected {}",
                g.len(),
                basis.dim()
            ));
        }
    }
    Ok(())
}

fn update_g_with(
    basis: &BlockDiag,
    a_pinv: &SymPinv,
    w: &DVector<f64>,
    y: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>> {
    let m = basis.combined(w)?;
    if y.len() != m.nrows() {
        return input(format!("y has length {}, expected {}", y.len(), m.nrows()));
    }
    let dim = m.ncols();
    if a_pinv.rank == dim {
        let mt = m.transpose();
        let rhs = &mt * y;
        if rhs.iter().all(|&v| v == 0.0) {
            return Ok(DVector::zeros(dim));
        }
        return solve_spd(&(&mt * &m + &a_pinv.pinv * lambda), &rhs);
    }
    // g = AHc lies in range(A): solve over coordinates z with g = V_r z.
    if a_pinv.rank == 0 {
        return Ok(DVector::zeros(dim));
    }
    let v = &a_pinv.range;
    let mv = &m * v;
    let mvt = mv.transpose();
    let rhs = &mvt * y;
    if rhs.iter().all(|&x| x == 0.0) {
        return Ok(DVector::zeros(dim));
    }
    let mut system = &mvt * &mv;
    for (k, lam) in a_pinv.range_values.iter().enumerate() {
        system[(k, k)] += lambda / lam;
    }
    Ok(v * solve_spd(&system, &rhs)?)
}

/// Exact minimiser over `g`: solves `(MᵀM + λA†) g = Mᵀy` with
/// `M = (wᵀ ⊗ I_n) B`. `tol` is the relative spectral cutoff of `A†`.
///
/// For singular `A` the minimum is taken over `g ∈ range(A)`, where the
/// penalty is finite.
pub fn update_g(
    basis: &BlockDiag,
    a: &MetricMatrix,
    w: &DVector<f64>,
    y: &DVector<f64>,
    lambda: f64,
    tol: f64,
) -> Result<DVector<f64>> {
    check_dims(basis, a, None)?;
    let sp = pinv_sym(a.entries(), tol);
    update_g_with(basis, &sp, w, y, lambda)
}

fn grad_h_with(a_pinv: &DMatrix<f64>, g: &DVector<f64>, lambda: f64) -> DMatrix<f64> {
    let u = a_pinv * g;
    &u * u.transpose() * (-lambda)
}

/// Gradient of `h(A) = λ⟨g, A†g⟩`: `−λ A†g gᵀA†`.
pub fn grad_h(a: &DMatrix<f64>, g: &DVector<f64>, lambda: f64, tol: f64) -> Result<DMatrix<f64>> {
    if !a.is_square() || a.nrows() != g.len() {
        return input(format!(
            "metric {:?} does not match g of length {}",
            a.shape(),
            g.len()
        ));
    }
    let sp = pinv_sym(a, tol);
    Ok(grad_h_with(&sp.pinv, g, lambda))
}

fn frobenius_step(
    a: &DMatrix<f64>,
    a_pinv: &DMatrix<f64>,
    g: &DVector<f64>,
    lambda: f64,
    eta: f64,
    mu: f64,
) -> DMatrix<f64> {
    let u = a_pinv * g;
    let mut next = a * (1.0 - 2.0 * mu * eta);
    next.ger(mu * lambda, &u, &u, 1.0);
    symmetrize(&next)
}

/// `A ← (1 − 2μη) A + μλ A†g gᵀA†`.
pub fn update_a_frobenius(
    a: &MetricMatrix,
    g: &DVector<f64>,
    lambda: f64,
    eta: f64,
    mu: f64,
) -> Result<MetricMatrix> {
    check_frobenius_step(mu, eta)?;
    if g.len() != a.dim() {
        return input(format!(
            "g has length {}, metric is {}x{}",
            g.len(),
            a.dim(),
            a.dim()
        ));
    }
    let sp = pinv_sym(a.entries(), PINV_RTOL);
    a.with_entries(frobenius_step(a.entries(), &sp.pinv, g, lambda, eta, mu))
}

fn sparse_step(
    a: &MetricMatrix,
    a_pinv: &DMatrix<f64>,
    g: &DVector<f64>,
    lambda: f64,
    eta: f64,
    mu: f64,
    layout: &GroupLayout,
) -> DMatrix<f64> {
    let u = a_pinv * g;
    let mut z = a.entries().clone();
    // A − μ∇h(A) with ∇h = −λ A†g gᵀA†
    z.ger(mu * lambda, &u, &u, 1.0);
    let z = symmetrize(&z);
    let b = a.block_size();
    let threshold = mu * eta;
    let mut out = DMatrix::zeros(z.nrows(), z.ncols());
    for group in layout.groups() {
        let blocks = group.blocks();
        let norm: f64 = blocks
            .iter()
            .map(|&(l, m)| {
                z.view((l * b, m * b), (b, b))
                    .iter()
                    .map(|x| x * x)
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt();
        let factor = if norm > threshold {
            1.0 - threshold / norm
        } else {
            0.0
        };
        if factor == 0.0 {
            continue;
        }
        for (l, m) in blocks {
            let src = z.view((l * b, m * b), (b, b)) * factor;
            out.view_mut((l * b, m * b), (b, b)).copy_from(&src);
        }
    }
    out
}

/// Proximal gradient step for the group penalty: every group of
/// `Z = A − μ∇h(A)` is scaled by `(1 − μη / ‖Z_γ‖_F)_+`. Groups at or below
/// the threshold come out as exact zeros; both blocks of an off-diagonal
/// pair share one factor.
pub fn update_a_sparse(
    a: &MetricMatrix,
    g: &DVector<f64>,
    lambda: f64,
    eta: f64,
    mu: f64,
    layout: &GroupLayout,
) -> Result<MetricMatrix> {
    if layout.views() != a.views() {
        return input(format!(
            "layout has {} views, metric has {}",
            layout.views(),
            a.views()
        ));
    }
    if g.len() != a.dim() {
        return input(format!(
            "g has length {}, metric is {}x{}",
            g.len(),
            a.dim(),
            a.dim()
        ));
    }
    let sp = pinv_sym(a.entries(), PINV_RTOL);
    a.with_entries(sparse_step(a, &sp.pinv, g, lambda, eta, mu, layout))
}

/// Per-view outputs `Z` (`n × v`), column `l` being block `l` of `B g`.
pub fn view_outputs(basis: &BlockDiag, g: &DVector<f64>) -> Result<DMatrix<f64>> {
    let bg = basis.apply(g)?;
    let n = basis.block_rows();
    Ok(DMatrix::from_fn(n, basis.views(), |i, l| bg[l * n + i]))
}

/// Least-squares combination weights `w = argmin ‖y − Z w‖²`.
pub fn update_w(basis: &BlockDiag, g: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let z = view_outputs(basis, g)?;
    if y.len() != z.nrows() {
        return input(format!("y has length {}, expected {}", y.len(), z.nrows()));
    }
    lstsq(&z, y)
}

#[allow(clippy::too_many_arguments)]
fn objective_with(
    basis: &BlockDiag,
    a: &MetricMatrix,
    a_pinv: &DMatrix<f64>,
    g: &DVector<f64>,
    w: &DVector<f64>,
    y: &DVector<f64>,
    lambda: f64,
    eta: f64,
    sparse: bool,
) -> Result<f64> {
    let pred = combiner_apply(w, &basis.apply(g)?)?;
    if pred.len() != y.len() {
        return input(format!("y has length {}, expected {}", y.len(), pred.len()));
    }
    let loss = (y - pred).norm_squared();
    let h = lambda * g.dot(&(a_pinv * g));
    let reg = if sparse {
        eta * a.group_norm_sum()
    } else {
        eta * a.frobenius_sq()
    };
    Ok(loss + h + reg)
}

/// Objective value for the given iterate.
#[allow(clippy::too_many_arguments)]
pub fn objective(
    basis: &BlockDiag,
    a: &MetricMatrix,
    g: &DVector<f64>,
    w: &DVector<f64>,
    y: &DVector<f64>,
    lambda: f64,
    eta: f64,
    sparse: bool,
) -> Result<f64> {
    check_dims(basis, a, Some(g))?;
    let sp = pinv_sym(a.entries(), PINV_RTOL);
    objective_with(basis, a, &sp.pinv, g, w, y, lambda, eta, sparse)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    G,
    W,
    A,
}

/// Snapshot handed to a fit observer after every half-step.
#[derive(Debug)]
pub struct IterateEvent<'a> {
    pub iteration: usize,
    pub phase: Phase,
    pub objective: f64,
    pub metric: &'a MetricMatrix,
    /// Smallest eigenvalue of the current metric.
    pub min_eigenvalue: f64,
    /// Step size accepted by the metric step (0 if the step was skipped).
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdWarning {
    pub iteration: usize,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub mode: Mode,
    pub a: MetricMatrix,
    pub g: DVector<f64>,
    pub w: DVector<f64>,
    /// Objective at the start and after every half-step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Iterations whose sparse metric step first produced a non-PSD candidate.
    pub psd_warnings: Vec<PsdWarning>,
    /// `g` solves rejected because round-off made them worse than the previous iterate.
    pub rejected_g_steps: usize,
    /// Metric steps skipped after exhausting the backtracking budget.
    pub skipped_a_steps: usize,
}

const PSD_TOL: f64 = 1e-10;

pub fn fit(design: Design<'_>, y: &DVector<f64>, cfg: &SolverConfig) -> Result<SolverState> {
    fit_with_observer(design, y, cfg, |_| {})
}

/// As [`fit`], calling `observer` after initialisation and every half-step.
pub fn fit_with_observer<F>(
    design: Design<'_>,
    y: &DVector<f64>,
    cfg: &SolverConfig,
    mut observer: F,
) -> Result<SolverState>
where
    F: FnMut(&IterateEvent<'_>),
{
    let basis = design.basis;
    let v = basis.views();
    cfg.validate(v)?;
    if y.len() != basis.block_rows() {
        return input(format!(
            "{} targets for {} samples",
            y.len(),
            basis.block_rows()
        ));
    }
    if y.iter().any(|t| !t.is_finite()) {
        return input("targets contain non-finite values");
    }

    let mut a = design.initial_metric(cfg.a_init)?;
    let mut a_pinv = pinv_sym(a.entries(), PINV_RTOL);
    let mut w = cfg
        .w_init
        .clone()
        .unwrap_or_else(|| DVector::from_element(v, 1.0 / v as f64));
    let mut g = DVector::zeros(basis.dim());
    let (lambda, eta, sparse) = (cfg.lambda, cfg.eta, cfg.sparse);
    let obj = |a: &MetricMatrix, sp: &SymPinv, g: &DVector<f64>, w: &DVector<f64>| {
        objective_with(basis, a, &sp.pinv, g, w, y, lambda, eta, sparse)
    };

    let mut current = obj(&a, &a_pinv, &g, &w)?;
    let mut trace = vec![current];
    let mut psd_warnings = Vec::new();
    let mut rejected_g_steps = 0;
    let mut skipped_a_steps = 0;
    observer(&IterateEvent {
        iteration: 0,
        phase: Phase::Init,
        objective: current,
        metric: &a,
        min_eigenvalue: a_pinv.min_eigenvalue,
        step: 0.0,
    });

    let diverged = |iteration: usize, value: f64| MvmlError::Divergence { iteration, value };
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iters {
        iterations = it;
        let start = current;

        let g_new = update_g_with(basis, &a_pinv, &w, y, lambda)?;
        let value = obj(&a, &a_pinv, &g_new, &w)?;
        if !value.is_finite() {
            return Err(diverged(it, value));
        }
        if value <= current {
            g = g_new;
            current = value;
        } else {
            rejected_g_steps += 1;
        }
        trace.push(current);
        observer(&IterateEvent {
            iteration: it,
            phase: Phase::G,
            objective: current,
            metric: &a,
            min_eigenvalue: a_pinv.min_eigenvalue,
            step: 0.0,
        });

        if cfg.learn_w {
            let w_new = update_w(basis, &g, y)?;
            let value = obj(&a, &a_pinv, &g, &w_new)?;
            if !value.is_finite() {
                return Err(diverged(it, value));
            }
            if value <= current {
                w = w_new;
                current = value;
            }
            trace.push(current);
            observer(&IterateEvent {
                iteration: it,
                phase: Phase::W,
                objective: current,
                metric: &a,
                min_eigenvalue: a_pinv.min_eigenvalue,
                step: 0.0,
            });
        }

        if cfg.learn_a {
            let mut mu = cfg.mu;
            let mut accepted = None;
            let mut warned = false;
            for _ in 0..=cfg.max_backtracks {
                let entries = if sparse {
                    sparse_step(&a, &a_pinv.pinv, &g, lambda, eta, mu, a.layout())
                } else {
                    frobenius_step(a.entries(), &a_pinv.pinv, &g, lambda, eta, mu)
                };
                let cand = a.with_entries(entries)?;
                let cand_pinv = pinv_sym(cand.entries(), PINV_RTOL);
                // The objective is +∞ off the PSD cone.
                let report = psd_from(&cand_pinv, PSD_TOL);
                if !report.is_psd {
                    if sparse && !warned {
                        log::warn!(
                            "sparse metric candidate at iteration {it} is not PSD (min eigenvalue {:e}), halving the step",
                            report.min_eigenvalue
                        );
                        psd_warnings.push(PsdWarning {
                            iteration: it,
                            min_eigenvalue: report.min_eigenvalue,
                        });
                        warned = true;
                    }
                    mu *= 0.5;
                    continue;
                }
                let value = obj(&cand, &cand_pinv, &g, &w)?;
                if value <= current {
                    accepted = Some((cand, cand_pinv, value, mu));
                    break;
                }
                mu *= 0.5;
            }
            let step = match accepted {
                Some((cand, cand_pinv, value, mu)) => {
                    a = cand;
                    a_pinv = cand_pinv;
                    current = value;
                    mu
                }
                None => {
                    skipped_a_steps += 1;
                    0.0
                }
            };
            trace.push(current);
            observer(&IterateEvent {
                iteration: it,
                phase: Phase::A,
                objective: current,
                metric: &a,
                min_eigenvalue: a_pinv.min_eigenvalue,
                step,
            });
        }

        let scale = start.abs().max(f64::MIN_POSITIVE);
        if (start - current) / scale < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(SolverState {
        mode: design.mode,
        a,
        g,
        w,
        objective_trace: trace,
        iterations,
        converged,
        psd_warnings,
        rejected_g_steps,
        skipped_a_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::GramMatrix;
    use crate::multiview::{group_layout, Group};
    use nalgebra::dmatrix;

    fn scalar_stack(k: f64) -> GramStack {
        GramStack::from_grams(vec![GramMatrix::from_matrix(dmatrix![k]).unwrap()]).unwrap()
    }

    #[test]
    fn combiner_examples() {
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(
            combiner_apply(&DVector::from_vec(vec![1.0]), &x).unwrap(),
            x
        );
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0, 5.0]);
        let half = DVector::from_vec(vec![0.5, 0.5]);
        assert_eq!(
            combiner_apply(&half, &x).unwrap(),
            DVector::from_vec(vec![2.0, 3.5])
        );
        assert!(combiner_apply(&half, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn scalar_g_update() {
        let h = scalar_stack(1.0);
        let a = MetricMatrix::new(dmatrix![1.0], 1, 1).unwrap();
        let w = DVector::from_vec(vec![1.0]);
        let lambda = 0.25;
        let g = update_g(
            h.as_block_diag(),
            &a,
            &w,
            &DVector::from_vec(vec![3.0]),
            lambda,
            PINV_RTOL,
        )
        .unwrap();
        assert!((g[0] - 3.0 / 1.25).abs() < 1e-15);
        let g0 = update_g(
            h.as_block_diag(),
            &a,
            &w,
            &DVector::zeros(1),
            lambda,
            PINV_RTOL,
        )
        .unwrap();
        assert_eq!(g0[0], 0.0);
    }

    #[test]
    fn grad_h_examples() {
        let a = DMatrix::<f64>::identity(3, 3);
        assert_eq!(
            grad_h(&a, &DVector::zeros(3), 1.0, PINV_RTOL).unwrap(),
            DMatrix::<f64>::zeros(3, 3)
        );
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let gr = grad_h(&a, &e1, 1.0, PINV_RTOL).unwrap();
        let mut expected = DMatrix::zeros(3, 3);
        expected[(0, 0)] = -1.0;
        assert!((gr - expected).amax() < 1e-15);
    }

    #[test]
    fn frobenius_step_examples() {
        let a = MetricMatrix::scaled_identity(2, 1, 1.0).unwrap();
        let shrunk = update_a_frobenius(&a, &DVector::zeros(2), 1.0, 0.1, 0.5).unwrap();
        assert!((shrunk.entries() - a.entries() * 0.9).amax() < 1e-15);

        let g = DVector::from_vec(vec![1.0, 2.0]);
        let next = update_a_frobenius(&a, &g, 1.0, 0.0, 1.0).unwrap();
        let expected = DMatrix::<f64>::identity(2, 2) + &g * g.transpose();
        assert!((next.entries() - expected).amax() < 1e-14);

        let e = update_a_frobenius(&a, &g, 1.0, 1.0, 0.5).unwrap_err();
        assert!(matches!(e, MvmlError::Config(_)));
    }

    #[test]
    fn sparse_step_kills_small_groups() {
        // two views, block size 1: groups are (0,0), (1,1) and the pair
        let a = MetricMatrix::new(dmatrix![2.0, 0.3; 0.3, 0.5], 1, 2).unwrap();
        let layout = group_layout(2).unwrap();
        let g = DVector::zeros(2);
        // μ = 1 so the threshold is η
        let out = update_a_sparse(&a, &g, 1.0, 0.6, 1.0, &layout).unwrap();
        assert_eq!(out.block_view(0, 1)[(0, 0)], 0.0);
        assert_eq!(out.block_view(1, 0)[(0, 0)], 0.0);
        assert_eq!(out.block_view(1, 1)[(0, 0)], 0.0);
        assert!((out.block_view(0, 0)[(0, 0)] - 1.4).abs() < 1e-15);
        // η = 0 is a plain gradient step
        let g = DVector::from_vec(vec![1.0, -1.0]);
        let plain = update_a_sparse(&a, &g, 0.7, 0.0, 0.3, &layout).unwrap();
        let grad = grad_h(a.entries(), &g, 0.7, PINV_RTOL).unwrap();
        assert!((plain.entries() - (a.entries() - grad * 0.3)).amax() < 1e-13);
        assert_eq!(out.group_frobenius(&Group::Pair(0, 1)).unwrap(), 0.0);
    }

    #[test]
    fn threshold_scales_with_step() {
        let a = MetricMatrix::new(dmatrix![2.0, 0.3; 0.3, 0.5], 1, 2).unwrap();
        let layout = group_layout(2).unwrap();
        // ‖pair‖ = 0.3·√2 ≈ 0.424 survives μη = 0.1·1.0
        let out = update_a_sparse(&a, &DVector::zeros(2), 1.0, 1.0, 0.1, &layout).unwrap();
        let norm = 0.3 * 2f64.sqrt();
        assert!((out.entries()[(0, 1)] - 0.3 * (1.0 - 0.1 / norm)).abs() < 1e-15);
    }

    #[test]
    fn least_squares_weights() {
        let basis = BlockDiag::new(vec![DMatrix::identity(3, 3)]).unwrap();
        let g = DVector::from_vec(vec![1.0, 2.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 1.0, 5.0]);
        let w = update_w(&basis, &g, &y).unwrap();
        assert!((w[0] - 3.0 / 5.0).abs() < 1e-14);
    }

    #[test]
    fn objective_at_zero_g() {
        let basis = BlockDiag::new(vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)]).unwrap();
        let a = MetricMatrix::scaled_identity(2, 2, 0.5).unwrap();
        let y = DVector::from_vec(vec![1.0, -2.0]);
        let w = DVector::from_vec(vec![0.5, 0.5]);
        let g = DVector::zeros(4);
        let f = objective(&basis, &a, &g, &w, &y, 0.3, 0.2, false).unwrap();
        assert!((f - (5.0 + 0.2 * 1.0)).abs() < 1e-14);
        let s = objective(&basis, &a, &g, &w, &y, 0.3, 0.2, true).unwrap();
        // two diagonal groups of norm √(2·0.25)
        assert!((s - (5.0 + 0.2 * 2.0 * 0.5f64.sqrt())).abs() < 1e-14);
        let plain = objective(&basis, &a, &g, &w, &y, 0.0, 0.0, false).unwrap();
        assert_eq!(plain, 5.0);
    }

    #[test]
    fn check_psd_examples() {
        let r = check_psd(&DMatrix::identity(3, 3), 1e-10);
        assert!(r.is_psd);
        assert!((r.min_eigenvalue - 1.0).abs() < 1e-15);
        let r = check_psd(&dmatrix![1.0, 0.0; 0.0, -1.0], 1e-10);
        assert!(!r.is_psd);
        assert!((r.min_eigenvalue + 1.0).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig {
            eta: 60.0,
            ..Default::default()
        };
        assert!(cfg.validate(2).is_err());
        cfg.sparse = true;
        assert!(cfg.validate(2).is_ok());
        cfg.lambda = 0.0;
        assert!(cfg.validate(2).is_err());
        let cfg = SolverConfig {
            w_init: Some(DVector::zeros(3)),
            ..Default::default()
        };
        assert!(cfg.validate(2).is_err());
    }
}
