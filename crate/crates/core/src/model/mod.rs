//! Trained models: fitting from raw views, prediction in full and Nyström
//! mode, one-vs-all multiclass, evaluation metrics and the generalisation
//! bound.

mod bound;
mod codec;
mod metrics;

pub use bound::{rademacher_bound, BoundInputs, RademacherBound};
pub use codec::{load, read_model, save, write_model, FORMAT_VERSION, MAGIC};
pub use metrics::{accuracy, nmse, r2};

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{input, MvmlError, Result};
use crate::kernels::{cross_gram, KernelConfig};
use crate::linalg::PINV_RTOL;
use crate::multiview::{build_gram_stack, GramStack};
use crate::nystrom::{landmark_count, test_factor, NystromFactors};
use crate::solver::{fit as solver_fit, Design, Mode, SolverConfig, SolverState};

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Regression,
    /// Single ±1 head; `positive` is predicted when the score is positive.
    Binary {
        negative: i64,
        positive: i64,
    },
    /// One ±1 head per class, classes sorted ascending.
    OneVsAll(Vec<i64>),
}

/// What prediction needs besides the coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// Training samples of every view.
    Full { train: Vec<DMatrix<f64>> },
    /// Anchor samples and `(W_l†)^{1/2}` of every view.
    Nystrom {
        anchors: Vec<DMatrix<f64>>,
        w_pinv_sqrt: Vec<DMatrix<f64>>,
        anchor_indices: Vec<usize>,
    },
}

/// One real-valued predictor: coefficients `g` (or `g̃`) and combination weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub g: DVector<f64>,
    pub w: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub method: String,
    pub lambda: f64,
    pub eta: f64,
    pub mu: f64,
    pub sparse: bool,
    pub learn_w: bool,
    /// Approximation level `p / n`; 1 in full mode.
    pub fraction: f64,
    pub seed: Option<u64>,
    /// Last few objective values of the first head's fit.
    pub objective_tail: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub kernel_configs: Vec<KernelConfig>,
    pub support: Support,
    pub heads: Vec<Head>,
    pub task: Task,
    pub meta: ModelMeta,
}

/// Nyström settings for a fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Approximation {
    pub fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub solver: SolverConfig,
    pub approximation: Option<Approximation>,
    pub method: String,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            approximation: None,
            method: "mvml".into(),
        }
    }
}

/// A model together with the solver states that produced it.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub model: ModelState,
    /// One per head.
    pub states: Vec<SolverState>,
    /// Wall-clock seconds spent in factorisation and solving (Gram
    /// construction excluded).
    pub fit_seconds: f64,
}

const OBJECTIVE_TAIL: usize = 8;

impl ModelState {
    pub fn mode(&self) -> Mode {
        match self.support {
            Support::Full { .. } => Mode::Full,
            Support::Nystrom { .. } => Mode::Nystrom,
        }
    }

    pub fn views(&self) -> usize {
        self.kernel_configs.len()
    }

    /// Per-view feature matrices: `K_l^test` (full) or `Q_l^test (W_l†)^{1/2}` (Nyström).
    fn test_features(&self, test: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
        if test.len() != self.views() {
            return input(format!(
                "{} test views for a {}-view model",
                test.len(),
                self.views()
            ));
        }
        let m = test[0].nrows();
        if let Some((l, _)) = test.iter().enumerate().find(|(_, x)| x.nrows() != m) {
            return input(format!(
                "test view {l} has a different number of rows than view 0"
            ));
        }
        match &self.support {
            Support::Full { train } => test
                .iter()
                .zip(train)
                .zip(&self.kernel_configs)
                .map(|((x, tr), cfg)| cross_gram(cfg, x, tr))
                .collect(),
            Support::Nystrom {
                anchors,
                w_pinv_sqrt,
                ..
            } => test
                .iter()
                .zip(anchors)
                .zip(w_pinv_sqrt)
                .zip(&self.kernel_configs)
                .map(|(((x, an), wps), cfg)| test_factor(cfg, x, an, wps))
                .collect(),
        }
    }

    fn head_views(&self, head: &Head, feats: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = feats[0].nrows();
        let c = feats[0].ncols();
        let mut out = DMatrix::zeros(m, feats.len());
        for (l, f) in feats.iter().enumerate() {
            out.set_column(l, &(f * head.g.rows(l * c, c)));
        }
        out
    }

    /// Per-view outputs `f_l(x)` of head `k`, one column per view.
    pub fn predict_views_head(&self, k: usize, test: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
        let head = self
            .heads
            .get(k)
            .ok_or_else(|| MvmlError::Input(format!("model has no head {k}")))?;
        let feats = self.test_features(test)?;
        Ok(self.head_views(head, &feats))
    }

    /// Per-view outputs of the first head.
    pub fn predict_views(&self, test: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
        self.predict_views_head(0, test)
    }

    /// `Σ_l w_l f_l(x)` for the first head.
    pub fn predict(&self, test: &[DMatrix<f64>]) -> Result<DVector<f64>> {
        let views = self.predict_views(test)?;
        Ok(&views * &self.heads[0].w)
    }

    /// Real-valued scores of every head, `m × heads`.
    pub fn scores(&self, test: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
        let feats = self.test_features(test)?;
        let m = feats[0].nrows();
        let mut out = DMatrix::zeros(m, self.heads.len());
        for (k, head) in self.heads.iter().enumerate() {
            out.set_column(k, &(self.head_views(head, &feats) * &head.w));
        }
        Ok(out)
    }

    /// Class decisions for classification models.
    pub fn predict_classes(&self, test: &[DMatrix<f64>]) -> Result<Vec<i64>> {
        let scores = self.scores(test)?;
        match &self.task {
            Task::Regression => input("regression model has no class decisions"),
            Task::Binary { negative, positive } => Ok(scores
                .column(0)
                .iter()
                .map(|&s| if s > 0.0 { *positive } else { *negative })
                .collect()),
            Task::OneVsAll(classes) => Ok((0..scores.nrows())
                .map(|i| classes[argmax_first(scores.row(i).iter().copied())])
                .collect()),
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_first(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Gram stack, optional Nyström factors and the support needed later at
/// prediction time.
struct Prepared {
    h: GramStack,
    factors: Option<NystromFactors>,
    support: Support,
}

fn prepare(
    views: &[DMatrix<f64>],
    kernels: &[KernelConfig],
    approx: Option<Approximation>,
) -> Result<(Prepared, f64)> {
    let h = build_gram_stack(views, kernels)?;
    let started = Instant::now();
    let (factors, support) = match approx {
        None => (
            None,
            Support::Full {
                train: views.to_vec(),
            },
        ),
        Some(ap) => {
            let p = landmark_count(ap.fraction, h.n())?;
            let f = NystromFactors::compute(&h, p, ap.seed, PINV_RTOL)?;
            let support = Support::Nystrom {
                anchors: f.anchor_points(views),
                w_pinv_sqrt: f.views.iter().map(|v| v.w_pinv_sqrt.clone()).collect(),
                anchor_indices: f.anchor_indices.clone(),
            };
            (Some(f), support)
        }
    };
    Ok((
        Prepared {
            h,
            factors,
            support,
        },
        started.elapsed().as_secs_f64(),
    ))
}

fn fit_heads(
    prep: &Prepared,
    targets: &[DVector<f64>],
    cfg: &SolverConfig,
) -> Result<Vec<SolverState>> {
    let u = prep.factors.as_ref().map(|f| f.build_u()).transpose()?;
    let design = match &u {
        Some(u) => Design::nystrom(u),
        None => Design::full(&prep.h),
    };
    targets
        .par_iter()
        .map(|y| solver_fit(design, y, cfg))
        .collect()
}

fn assemble(
    prep: Prepared,
    kernels: &[KernelConfig],
    states: &[SolverState],
    task: Task,
    opts: &TrainOptions,
) -> ModelState {
    let trace = &states[0].objective_trace;
    let tail = trace[trace.len().saturating_sub(OBJECTIVE_TAIL)..].to_vec();
    ModelState {
        kernel_configs: kernels.to_vec(),
        support: prep.support,
        heads: states
            .iter()
            .map(|s| Head {
                g: s.g.clone(),
                w: s.w.clone(),
            })
            .collect(),
        task,
        meta: ModelMeta {
            method: opts.method.clone(),
            lambda: opts.solver.lambda,
            eta: opts.solver.eta,
            mu: opts.solver.mu,
            sparse: opts.solver.sparse,
            learn_w: opts.solver.learn_w,
            fraction: opts.approximation.map_or(1.0, |a| a.fraction),
            seed: opts.approximation.map(|a| a.seed),
            objective_tail: tail,
        },
    }
}

/// Fits a single real-valued head (regression, or a pre-encoded ±1 task).
pub fn fit_regression(
    views: &[DMatrix<f64>],
    y: &DVector<f64>,
    kernels: &[KernelConfig],
    opts: &TrainOptions,
) -> Result<FittedModel> {
    let (prep, factor_secs) = prepare(views, kernels, opts.approximation)?;
    let started = Instant::now();
    let states = fit_heads(&prep, std::slice::from_ref(y), &opts.solver)?;
    let fit_seconds = factor_secs + started.elapsed().as_secs_f64();
    let model = assemble(prep, kernels, &states, Task::Regression, opts);
    Ok(FittedModel {
        model,
        states,
        fit_seconds,
    })
}

fn sorted_classes(labels: &[i64]) -> Vec<i64> {
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    classes
}

fn pm_one(labels: &[i64], class: i64) -> DVector<f64> {
    DVector::from_iterator(
        labels.len(),
        labels.iter().map(|&c| if c == class { 1.0 } else { -1.0 }),
    )
}

/// Two-class model with a single ±1 head; the larger class id is `+1`.
pub fn fit_binary(
    views: &[DMatrix<f64>],
    labels: &[i64],
    kernels: &[KernelConfig],
    opts: &TrainOptions,
) -> Result<FittedModel> {
    let classes = sorted_classes(labels);
    if classes.len() != 2 {
        return input(format!(
            "binary task needs exactly 2 classes, found {}",
            classes.len()
        ));
    }
    let y = pm_one(labels, classes[1]);
    let (prep, factor_secs) = prepare(views, kernels, opts.approximation)?;
    let started = Instant::now();
    let states = fit_heads(&prep, &[y], &opts.solver)?;
    let fit_seconds = factor_secs + started.elapsed().as_secs_f64();
    let task = Task::Binary {
        negative: classes[0],
        positive: classes[1],
    };
    let model = assemble(prep, kernels, &states, task, opts);
    Ok(FittedModel {
        model,
        states,
        fit_seconds,
    })
}

/// One ±1 model per class over `classes`; prediction takes the argmax score.
///
/// `classes` lists every class the model must know; each needs at least one
/// training sample.
pub fn fit_one_vs_all(
    views: &[DMatrix<f64>],
    labels: &[i64],
    classes: &[i64],
    kernels: &[KernelConfig],
    opts: &TrainOptions,
) -> Result<FittedModel> {
    let mut classes = classes.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return input("one-vs-all needs at least two classes");
    }
    if let Some(c) = classes.iter().find(|c| !labels.contains(c)) {
        return input(format!("class {c} has no training samples"));
    }
    if let Some(c) = labels.iter().find(|c| !classes.contains(c)) {
        return input(format!("label {c} is not among the declared classes"));
    }
    let targets: Vec<_> = classes.iter().map(|&c| pm_one(labels, c)).collect();
    let (prep, factor_secs) = prepare(views, kernels, opts.approximation)?;
    let started = Instant::now();
    let states = fit_heads(&prep, &targets, &opts.solver)?;
    let fit_seconds = factor_secs + started.elapsed().as_secs_f64();
    let model = assemble(prep, kernels, &states, Task::OneVsAll(classes), opts);
    Ok(FittedModel {
        model,
        states,
        fit_seconds,
    })
}

/// Binary model for two classes, one-vs-all otherwise.
pub fn fit_classifier(
    views: &[DMatrix<f64>],
    labels: &[i64],
    kernels: &[KernelConfig],
    opts: &TrainOptions,
) -> Result<FittedModel> {
    let classes = sorted_classes(labels);
    if classes.len() == 2 {
        fit_binary(views, labels, kernels, opts)
    } else {
        fit_one_vs_all(views, labels, &classes, kernels, opts)
    }
}
