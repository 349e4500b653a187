//! Repeated-approximation experiments: methods × Nyström fractions × seeds.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mvml::multiview::MetricMatrix;
use mvml::{MvmlError, Result};

use crate::cv::{cross_validate, default_etas, default_lambdas, CvConfig};
use crate::dataset::{load_dataset, parse_policy, Labels, MultiViewDataset};
use crate::method::{metric_kind, train, FitSettings, Method};

fn default_test_fraction() -> f64 {
    0.3
}
fn default_fractions() -> Vec<f64> {
    vec![1.0]
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3]
}
fn default_folds() -> usize {
    3
}
fn default_mu() -> f64 {
    FitSettings::default().mu
}
fn default_max_iters() -> usize {
    FitSettings::default().max_iters
}
fn default_tol() -> f64 {
    FitSettings::default().tol
}

/// Experiment description, read from TOML.
///
/// Relative paths are resolved against the directory of the config file by
/// [`ExperimentConfig::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    /// Held-out set; when absent a stratified split of `manifest` is used.
    #[serde(default)]
    pub test_manifest: Option<PathBuf>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    /// Per-view kernel overrides: `linear`, `gaussian`, `gaussian:mean_distance`,
    /// `gaussian:inv_features` or `gaussian:<sigma>`.
    #[serde(default)]
    pub kernels: Option<Vec<String>>,
    pub methods: Vec<Method>,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Defaults to the standard grid for the task.
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default)]
    pub etas: Option<Vec<f64>>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub learn_w: bool,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    pub output: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            MvmlError::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| MvmlError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.manifest);
        fix(&mut cfg.output);
        if let Some(t) = cfg.test_manifest.as_mut() {
            fix(t);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MvmlError::Config(m.into()));
        if self.methods.is_empty() {
            return bad("methods must be nonempty");
        }
        if self.fractions.is_empty() || self.fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return bad("fractions must be nonempty and lie in (0, 1]");
        }
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty");
        }
        if self.lambdas.as_ref().is_some_and(|l| l.is_empty())
            || self.etas.as_ref().is_some_and(|e| e.is_empty())
        {
            return bad("grids must be nonempty");
        }
        if self.test_manifest.is_none() && !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub method: Method,
    pub fraction: f64,
    pub seed: u64,
    pub lambda: f64,
    pub eta: f64,
    /// Test accuracy or nMSE; `None` when the run failed.
    pub metric: Option<f64>,
    pub r2: Option<f64>,
    pub fit_seconds: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub fraction: f64,
    pub runs: usize,
    pub failed: usize,
    /// Over successful runs; NaN if there are none.
    pub mean: f64,
    /// Sample standard deviation (0 for a single run).
    pub std: f64,
    pub r2_mean: Option<f64>,
    pub fit_seconds_mean: f64,
}

/// Learned metric of one run, kept for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricDump {
    pub method: Method,
    pub fraction: f64,
    pub seed: u64,
    pub metric: MetricMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// `accuracy` or `nmse`.
    pub metric: String,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
    pub metrics: Vec<MetricDump>,
}

/// Stratified (classification) or plain shuffled split into `(train, test)` indices.
pub fn train_test_split(
    labels: &Labels,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<usize>> = match labels {
        Labels::Classes(c) => {
            let mut classes = c.clone();
            classes.sort_unstable();
            classes.dedup();
            classes
                .iter()
                .map(|&k| (0..n).filter(|&i| c[i] == k).collect())
                .collect()
        }
        Labels::Targets(_) => vec![(0..n).collect()],
    };
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut g in groups {
        g.shuffle(&mut rng);
        let k = ((g.len() as f64 * test_fraction).round() as usize)
            .clamp(1, g.len().saturating_sub(1).max(1));
        if g.len() < 2 {
            return Err(MvmlError::Config(
                "every class needs two samples to split".into(),
            ));
        }
        test.extend_from_slice(&g[..k]);
        train.extend_from_slice(&g[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn apply_kernel_overrides(ds: &mut MultiViewDataset, overrides: &[String]) -> Result<()> {
    if overrides.len() != ds.v() {
        return Err(MvmlError::Config(format!(
            "{} kernel overrides for {} views",
            overrides.len(),
            ds.v()
        )));
    }
    for (slot, spec) in ds.kernels.iter_mut().zip(overrides) {
        let (kernel, sigma) = match spec.split_once(':') {
            Some((k, s)) => (k, Some(s)),
            None => (spec.as_str(), None),
        };
        *slot = parse_policy(kernel, sigma).map_err(MvmlError::Config)?;
    }
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates runs per `(method, fraction)` in first-seen order.
pub fn summarize(runs: &[RunRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, f64)> = Vec::new();
    for r in runs {
        if !keys.iter().any(|&(m, f)| m == r.method && f == r.fraction) {
            keys.push((r.method, r.fraction));
        }
    }
    keys.into_iter()
        .map(|(method, fraction)| {
            let cell: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.method == method && r.fraction == fraction)
                .collect();
            let ok: Vec<f64> = cell.iter().filter_map(|r| r.metric).collect();
            let (mean, std) = mean_std(&ok);
            let r2: Vec<f64> = cell.iter().filter_map(|r| r.r2).collect();
            let secs: Vec<f64> = cell.iter().filter_map(|r| r.fit_seconds).collect();
            SummaryRow {
                method,
                fraction,
                runs: cell.len(),
                failed: cell.len() - ok.len(),
                mean,
                std,
                r2_mean: (!r2.is_empty()).then(|| mean_std(&r2).0),
                fit_seconds_mean: mean_std(&secs).0,
            }
        })
        .collect()
}

struct Cell {
    method: Method,
    fraction: f64,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let mut full = load_dataset(&cfg.manifest)?;
    if let Some(k) = &cfg.kernels {
        apply_kernel_overrides(&mut full, k)?;
    }
    let (train_ds, test_ds) = match &cfg.test_manifest {
        Some(t) => {
            let mut test = load_dataset(t)?;
            test.kernels = full.kernels.clone();
            (full, test)
        }
        None => {
            let (tr, te) = train_test_split(&full.labels, cfg.test_fraction, cfg.split_seed)?;
            (full.subset(&tr), full.subset(&te))
        }
    };
    if train_ds.v() != test_ds.v()
        || train_ds.labels.is_classification() != test_ds.labels.is_classification()
    {
        return Err(MvmlError::Input(
            "train and test sets disagree on views or task".into(),
        ));
    }
    run_on_split(cfg, &train_ds, &test_ds)
}

/// Runs the protocol on an explicit split; `cfg.manifest` and the split
/// settings are ignored.
pub fn run_on_split(
    cfg: &ExperimentConfig,
    train_ds: &MultiViewDataset,
    test_ds: &MultiViewDataset,
) -> Result<Report> {
    let classification = train_ds.labels.is_classification();
    let lambdas = cfg.lambdas.clone().unwrap_or_else(default_lambdas);
    let etas = cfg
        .etas
        .clone()
        .unwrap_or_else(|| default_etas(classification));

    let mut cells = Vec::new();
    for &method in &cfg.methods {
        if method.is_krr() {
            cells.push(Cell {
                method,
                fraction: 1.0,
            });
        } else {
            for &fraction in &cfg.fractions {
                cells.push(Cell { method, fraction });
            }
        }
    }

    let results: Vec<(Vec<RunRecord>, Option<MetricDump>)> = cells
        .par_iter()
        .map(|cell| {
            let base = FitSettings {
                lambda: lambdas[0],
                eta: etas[0],
                mu: cfg.mu,
                max_iters: cfg.max_iters,
                tol: cfg.tol,
                learn_w: cfg.learn_w,
                fraction: cell.fraction,
                seed: cfg.seeds[0],
            };
            let single_cell = lambdas.len() == 1 && (!cell.method.uses_eta() || etas.len() == 1);
            let chosen = if single_cell {
                Ok((
                    lambdas[0],
                    if cell.method.uses_eta() {
                        etas[0]
                    } else {
                        base.eta
                    },
                ))
            } else {
                cross_validate(
                    train_ds,
                    &CvConfig {
                        method: cell.method,
                        lambdas: lambdas.clone(),
                        etas: etas.clone(),
                        folds: cfg.folds,
                        seed: cfg.split_seed,
                        base: base.clone(),
                    },
                )
                .map(|r| (r.best_lambda, r.best_eta))
            };
            let mut dump = None;
            let records = cfg
                .seeds
                .iter()
                .map(|&seed| {
                    let (lambda, eta) = chosen.as_ref().map_or((f64::NAN, f64::NAN), |&c| c);
                    let mut rec = RunRecord {
                        method: cell.method,
                        fraction: cell.fraction,
                        seed,
                        lambda,
                        eta,
                        metric: None,
                        r2: None,
                        fit_seconds: None,
                        error: None,
                    };
                    let outcome = chosen
                        .as_ref()
                        .map_err(|e| MvmlError::Config(e.to_string()))
                        .and_then(|_| {
                            let settings = FitSettings {
                                lambda,
                                eta,
                                seed,
                                ..base.clone()
                            };
                            let trained = train(cell.method, train_ds, &settings)?;
                            let eval = trained.evaluate(test_ds)?;
                            Ok((trained, eval))
                        });
                    match outcome {
                        Ok((trained, eval)) => {
                            rec.metric = Some(eval.metric);
                            rec.r2 = eval.r2;
                            rec.fit_seconds = Some(trained.fit_seconds());
                            if dump.is_none() {
                                dump = trained.metric().map(|m| MetricDump {
                                    method: cell.method,
                                    fraction: cell.fraction,
                                    seed,
                                    metric: m.clone(),
                                });
                            }
                        }
                        Err(e) => {
                            log::warn!(
                                "{} at fraction {} seed {seed} failed: {e}",
                                cell.method,
                                cell.fraction
                            );
                            rec.error = Some(e.to_string());
                        }
                    }
                    rec
                })
                .collect();
            (records, dump)
        })
        .collect();

    let mut runs = Vec::new();
    let mut metrics = Vec::new();
    for (r, d) in results {
        runs.extend(r);
        metrics.extend(d);
    }
    Ok(Report {
        metric: metric_kind(&train_ds.labels).0.to_string(),
        summary: summarize(&runs),
        runs,
        metrics,
    })
}
