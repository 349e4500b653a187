//! Method names, their solver settings, and a uniform train/evaluate surface.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use mvml::kernels::KernelPolicy;
use mvml::model::{
    accuracy, fit_classifier, fit_regression, nmse, Approximation, FittedModel, ModelState,
    TrainOptions,
};
use mvml::multiview::MetricMatrix;
use mvml::solver::{MetricInit, SolverConfig};
use mvml::{MvmlError, Result};

use crate::baseline::{krr_baseline, FusionMode, KrrModel};
use crate::dataset::{Labels, MultiViewDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mvml,
    MvmlSparse,
    MvmlCov,
    MvmlI,
    KrrEarly,
    KrrLate,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Mvml,
        Method::MvmlSparse,
        Method::MvmlCov,
        Method::MvmlI,
        Method::KrrEarly,
        Method::KrrLate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mvml => "mvml",
            Method::MvmlSparse => "mvml_sparse",
            Method::MvmlCov => "mvml_cov",
            Method::MvmlI => "mvml_i",
            Method::KrrEarly => "krr_early",
            Method::KrrLate => "krr_late",
        }
    }

    /// Whether η enters the fit.
    pub fn uses_eta(self) -> bool {
        matches!(self, Method::Mvml | Method::MvmlSparse)
    }

    pub fn is_krr(self) -> bool {
        matches!(self, Method::KrrEarly | Method::KrrLate)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                format!(
                    "unknown method `{s}` (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

/// Everything a single fit needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub lambda: f64,
    pub eta: f64,
    pub mu: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub learn_w: bool,
    /// Nyström level `p / n`; 1 means the exact full-kernel solver.
    pub fraction: f64,
    pub seed: u64,
}

impl Default for FitSettings {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            lambda: s.lambda,
            eta: s.eta,
            mu: s.mu,
            max_iters: s.max_iters,
            tol: s.tol,
            learn_w: s.learn_w,
            fraction: 1.0,
            seed: 0,
        }
    }
}

/// Solver configuration for an MVML method. For the Frobenius variant a step
/// size with `μη ≥ 1/2` is lowered to `0.25 / η`.
pub fn solver_config(method: Method, s: &FitSettings) -> Result<SolverConfig> {
    let mut cfg = SolverConfig {
        lambda: s.lambda,
        eta: s.eta,
        mu: s.mu,
        max_iters: s.max_iters,
        tol: s.tol,
        learn_w: s.learn_w,
        ..SolverConfig::default()
    };
    match method {
        Method::Mvml => {
            if s.mu * s.eta >= 0.5 {
                cfg.mu = 0.25 / s.eta;
                log::info!(
                    "step size lowered from {} to {} so that mu·eta < 1/2",
                    s.mu,
                    cfg.mu
                );
            }
        }
        Method::MvmlSparse => cfg.sparse = true,
        Method::MvmlCov => {
            cfg.learn_a = false;
            cfg.a_init = MetricInit::PresetCov;
        }
        Method::MvmlI => {
            cfg.learn_a = false;
            cfg.a_init = MetricInit::PresetIdentityBlocks;
        }
        Method::KrrEarly | Method::KrrLate => {
            return Err(MvmlError::Config(format!(
                "{method} is not a metric-learning method"
            )))
        }
    }
    Ok(cfg)
}

/// Kernel used by the ridge baselines: linear when every view is linear,
/// otherwise Gaussian with the mean-distance bandwidth.
pub fn krr_policy(ds: &MultiViewDataset) -> KernelPolicy {
    if ds.kernels.iter().all(|k| *k == KernelPolicy::Linear) {
        KernelPolicy::Linear
    } else {
        KernelPolicy::Gaussian(mvml::kernels::BandwidthPolicy::MeanDistance)
    }
}

#[derive(Debug, Clone)]
pub enum Trained {
    Mvml(Box<FittedModel>),
    Krr { model: KrrModel, fit_seconds: f64 },
}

/// Accuracy for classification, nMSE and R² for regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub metric: f64,
    pub r2: Option<f64>,
}

/// Name of the primary metric and whether larger is better.
pub fn metric_kind(labels: &Labels) -> (&'static str, bool) {
    if labels.is_classification() {
        ("accuracy", true)
    } else {
        ("nmse", false)
    }
}

pub fn train(method: Method, ds: &MultiViewDataset, s: &FitSettings) -> Result<Trained> {
    if !(s.fraction > 0.0 && s.fraction <= 1.0) {
        return Err(MvmlError::Config(format!(
            "fraction must lie in (0, 1], got {}",
            s.fraction
        )));
    }
    match method {
        Method::KrrEarly | Method::KrrLate => {
            let mode = if method == Method::KrrEarly {
                FusionMode::Early
            } else {
                FusionMode::Late
            };
            let started = Instant::now();
            let model = krr_baseline(ds, mode, s.lambda, krr_policy(ds))?;
            Ok(Trained::Krr {
                model,
                fit_seconds: started.elapsed().as_secs_f64(),
            })
        }
        _ => {
            let opts = TrainOptions {
                solver: solver_config(method, s)?,
                approximation: (s.fraction < 1.0).then_some(Approximation {
                    fraction: s.fraction,
                    seed: s.seed,
                }),
                method: method.name().into(),
            };
            let kernels = ds.resolve_kernels()?;
            let fitted = match &ds.labels {
                Labels::Classes(c) => fit_classifier(&ds.views, c, &kernels, &opts)?,
                Labels::Targets(y) => fit_regression(&ds.views, y, &kernels, &opts)?,
            };
            Ok(Trained::Mvml(Box::new(fitted)))
        }
    }
}

impl Trained {
    pub fn fit_seconds(&self) -> f64 {
        match self {
            Trained::Mvml(f) => f.fit_seconds,
            Trained::Krr { fit_seconds, .. } => *fit_seconds,
        }
    }

    /// Learned metric of the first head, for metric-learning methods.
    pub fn metric(&self) -> Option<&MetricMatrix> {
        match self {
            Trained::Mvml(f) => f.states.first().map(|s| &s.a),
            Trained::Krr { .. } => None,
        }
    }

    pub fn model(&self) -> Option<&ModelState> {
        match self {
            Trained::Mvml(f) => Some(&f.model),
            Trained::Krr { .. } => None,
        }
    }

    pub fn evaluate(&self, test: &MultiViewDataset) -> Result<Evaluation> {
        match &test.labels {
            Labels::Classes(truth) => {
                let pred = match self {
                    Trained::Mvml(f) => f.model.predict_classes(&test.views)?,
                    Trained::Krr { model, .. } => model.predict_classes(&test.views)?,
                };
                Ok(Evaluation {
                    metric: accuracy(&pred, truth)?,
                    r2: None,
                })
            }
            Labels::Targets(y) => {
                let pred = match self {
                    Trained::Mvml(f) => f.model.predict(&test.views)?,
                    Trained::Krr { model, .. } => model.predict(&test.views)?,
                };
                let e = nmse(&pred, y)?;
                Ok(Evaluation {
                    metric: e,
                    r2: Some(1.0 - e),
                })
            }
        }
    }
}
