//! Kernel ridge regression fusion baselines.

use nalgebra::{DMatrix, DVector};

use mvml::kernels::{cross_gram, gram, KernelConfig, KernelPolicy};
use mvml::linalg::solve_spd;
use mvml::model::{argmax_first, Task};
use mvml::{MvmlError, Result};

use crate::dataset::{Labels, MultiViewDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// One kernel over the concatenated features.
    Early,
    /// One model per view, predictions averaged.
    Late,
    SingleView(usize),
}

/// A ridge model on one feature block.
#[derive(Debug, Clone, PartialEq)]
struct Part {
    /// Views whose features are concatenated into this block.
    views: Vec<usize>,
    kernel: KernelConfig,
    train: DMatrix<f64>,
    /// `n × heads`.
    coef: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrrModel {
    pub mode: FusionMode,
    pub task: Task,
    parts: Vec<Part>,
}

fn concat(views: &[DMatrix<f64>], idx: &[usize]) -> DMatrix<f64> {
    let n = views[idx[0]].nrows();
    let d: usize = idx.iter().map(|&l| views[l].ncols()).sum();
    let mut out = DMatrix::zeros(n, d);
    let mut col = 0;
    for &l in idx {
        out.view_mut((0, col), views[l].shape())
            .copy_from(&views[l]);
        col += views[l].ncols();
    }
    out
}

/// `(task, targets)` with one column per head: raw targets for regression,
/// ±1 for classification (one column if binary, one per class otherwise).
pub fn encode_targets(labels: &Labels) -> Result<(Task, DMatrix<f64>)> {
    match labels {
        Labels::Targets(t) => Ok((
            Task::Regression,
            DMatrix::from_column_slice(t.len(), 1, t.as_slice()),
        )),
        Labels::Classes(c) => {
            let mut classes = c.clone();
            classes.sort_unstable();
            classes.dedup();
            let pm = |k: i64| {
                DVector::from_iterator(c.len(), c.iter().map(|&x| if x == k { 1.0 } else { -1.0 }))
            };
            match classes.len() {
                0 | 1 => Err(MvmlError::Input(
                    "classification needs at least two classes".into(),
                )),
                2 => Ok((
                    Task::Binary {
                        negative: classes[0],
                        positive: classes[1],
                    },
                    DMatrix::from_columns(&[pm(classes[1])]),
                )),
                _ => {
                    let cols: Vec<_> = classes.iter().map(|&k| pm(k)).collect();
                    Ok((Task::OneVsAll(classes), DMatrix::from_columns(&cols)))
                }
            }
        }
    }
}

/// Closed-form ridge fit `(K + λI) c = y` per head. `policy` picks the kernel
/// of every block and is resolved on the training data.
pub fn krr_baseline(
    ds: &MultiViewDataset,
    mode: FusionMode,
    lambda: f64,
    policy: KernelPolicy,
) -> Result<KrrModel> {
    ds.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(MvmlError::Config(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let blocks: Vec<Vec<usize>> = match mode {
        FusionMode::Early => vec![(0..ds.v()).collect()],
        FusionMode::Late => (0..ds.v()).map(|l| vec![l]).collect(),
        FusionMode::SingleView(l) if l < ds.v() => vec![vec![l]],
        FusionMode::SingleView(l) => {
            return Err(MvmlError::Input(format!(
                "view {l} out of range for {} views",
                ds.v()
            )))
        }
    };
    let (task, y) = encode_targets(&ds.labels)?;
    let parts = blocks
        .into_iter()
        .map(|views| {
            let train = concat(&ds.views, &views);
            let kernel = policy.resolve(&train)?;
            let mut k = gram(&kernel, &train)?.into_matrix();
            for i in 0..k.nrows() {
                k[(i, i)] += lambda;
            }
            let cols = y
                .column_iter()
                .map(|col| solve_spd(&k, &col.into_owned()))
                .collect::<Result<Vec<_>>>()?;
            Ok(Part {
                views,
                kernel,
                train,
                coef: DMatrix::from_columns(&cols),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KrrModel { mode, task, parts })
}

impl KrrModel {
    /// Real-valued scores, `m × heads`, averaged over the parts.
    pub fn scores(&self, test: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
        let mut total: Option<DMatrix<f64>> = None;
        for part in &self.parts {
            if let Some(&l) = part.views.iter().find(|&&l| l >= test.len()) {
                return Err(MvmlError::Input(format!("test data lacks view {l}")));
            }
            let x = concat(test, &part.views);
            let s = cross_gram(&part.kernel, &x, &part.train)? * &part.coef;
            total = Some(match total {
                Some(t) => t + s,
                None => s,
            });
        }
        Ok(total.expect("at least one part") / self.parts.len() as f64)
    }

    pub fn predict(&self, test: &[DMatrix<f64>]) -> Result<DVector<f64>> {
        Ok(self.scores(test)?.column(0).into_owned())
    }

    pub fn predict_classes(&self, test: &[DMatrix<f64>]) -> Result<Vec<i64>> {
        let s = self.scores(test)?;
        match &self.task {
            Task::Regression => Err(MvmlError::Input(
                "regression model has no class decisions".into(),
            )),
            Task::Binary { negative, positive } => Ok(s
                .column(0)
                .iter()
                .map(|&x| if x > 0.0 { *positive } else { *negative })
                .collect()),
            Task::OneVsAll(classes) => Ok((0..s.nrows())
                .map(|i| classes[argmax_first(s.row(i).iter().copied())])
                .collect()),
        }
    }
}
