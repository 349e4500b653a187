//! k-fold cross-validation over a (λ, η) grid.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use mvml::{MvmlError, Result};

use crate::dataset::{Labels, MultiViewDataset};
use crate::method::{metric_kind, train, FitSettings, Method};

/// Validation index sets, one per fold, each sorted.
///
/// Classification folds are stratified: each class is shuffled and dealt
/// round-robin. Regression folds are contiguous chunks of a shuffled order.
pub fn fold_indices(labels: &Labels, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    if folds < 2 {
        return Err(MvmlError::Config(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if folds > n {
        return Err(MvmlError::Config(format!("{folds} folds for {n} samples")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    match labels {
        Labels::Classes(c) => {
            let mut by_class: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
            for (i, &k) in c.iter().enumerate() {
                by_class.entry(k).or_default().push(i);
            }
            if let Some((k, idx)) = by_class.iter().find(|(_, idx)| idx.len() < folds) {
                return Err(MvmlError::Config(format!(
                    "{folds} folds but class {k} has only {} samples",
                    idx.len()
                )));
            }
            let mut next = 0;
            for idx in by_class.values_mut() {
                idx.shuffle(&mut rng);
                for &i in idx.iter() {
                    out[next % folds].push(i);
                    next += 1;
                }
            }
        }
        Labels::Targets(_) => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let (base, extra) = (n / folds, n % folds);
            let mut start = 0;
            for (f, fold) in out.iter_mut().enumerate() {
                let len = base + usize::from(f < extra);
                fold.extend_from_slice(&idx[start..start + len]);
                start += len;
            }
        }
    }
    out.iter_mut().for_each(|f| f.sort_unstable());
    Ok(out)
}

/// Training indices complementary to a validation fold.
pub fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    fold.iter().for_each(|&i| mask[i] = false);
    (0..n).filter(|&i| mask[i]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvCell {
    pub lambda: f64,
    pub eta: f64,
    /// Validation metric per fold; `None` where the fit failed.
    pub fold_scores: Vec<Option<f64>>,
    /// Mean over folds, `None` if any fold failed.
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best_lambda: f64,
    pub best_eta: f64,
    pub metric: &'static str,
    pub higher_is_better: bool,
    pub cells: Vec<CvCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub method: Method,
    pub lambdas: Vec<f64>,
    /// Ignored for methods without η.
    pub etas: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    /// Settings other than λ and η.
    pub base: FitSettings,
}

/// Picks the grid cell with the best mean validation metric. Ties go to the
/// smaller λ, then the smaller η.
pub fn cross_validate(ds: &MultiViewDataset, cfg: &CvConfig) -> Result<CvResult> {
    if cfg.lambdas.is_empty() || (cfg.method.uses_eta() && cfg.etas.is_empty()) {
        return Err(MvmlError::Config(
            "cross-validation grids must be nonempty".into(),
        ));
    }
    let folds = fold_indices(&ds.labels, cfg.folds, cfg.seed)?;
    let etas = if cfg.method.uses_eta() {
        cfg.etas.clone()
    } else {
        vec![cfg.base.eta]
    };
    let mut grid: Vec<(f64, f64)> = cfg
        .lambdas
        .iter()
        .flat_map(|&l| etas.iter().map(move |&e| (l, e)))
        .collect();
    grid.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let splits: Vec<_> = folds
        .iter()
        .map(|val| (ds.subset(&complement(ds.n(), val)), ds.subset(val)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..splits.len()).map(move |f| (c, f)))
        .collect();
    let scores: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (lambda, eta) = grid[c];
            let settings = FitSettings {
                lambda,
                eta,
                ..cfg.base.clone()
            };
            let (tr, va) = &splits[f];
            let result = train(cfg.method, tr, &settings).and_then(|t| t.evaluate(va));
            match result {
                Ok(e) if e.metric.is_finite() => Some(e.metric),
                Ok(_) => None,
                Err(e) => {
                    log::warn!("cv cell lambda={lambda} eta={eta} fold {f} failed: {e}");
                    None
                }
            }
        })
        .collect();

    let k = splits.len();
    let cells: Vec<CvCell> = grid
        .iter()
        .enumerate()
        .map(|(c, &(lambda, eta))| {
            let fold_scores = scores[c * k..(c + 1) * k].to_vec();
            let mean = fold_scores
                .iter()
                .copied()
                .collect::<Option<Vec<f64>>>()
                .map(|s| s.iter().sum::<f64>() / k as f64);
            CvCell {
                lambda,
                eta,
                fold_scores,
                mean,
            }
        })
        .collect();

    let (metric, higher) = metric_kind(&ds.labels);
    let mut best: Option<&CvCell> = None;
    for cell in &cells {
        let Some(m) = cell.mean else { continue };
        let better = match best.and_then(|b| b.mean) {
            None => true,
            Some(b) if higher => m > b,
            Some(b) => m < b,
        };
        if better {
            best = Some(cell);
        }
    }
    let best =
        best.ok_or_else(|| MvmlError::Numerical("every cross-validation cell failed".into()))?;
    Ok(CvResult {
        best_lambda: best.lambda,
        best_eta: best.eta,
        metric,
        higher_is_better: higher,
        cells,
    })
}

/// `count` values spaced evenly in log scale from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| {
            let e = a + (b - a) * i as f64 / (count - 1) as f64;
            // snap to the nearest power of ten when the exponent is integral
            if (e - e.round()).abs() < 1e-9 {
                format!("1e{}", e.round() as i32)
                    .parse()
                    .expect("valid literal")
            } else {
                10f64.powf(e)
            }
        })
        .collect()
}

/// λ grid 1e-8 … 10 (7 points).
pub fn default_lambdas() -> Vec<f64> {
    log_grid(1e-8, 10.0, 7)
}

/// η grid: 1e-4 … 100 (7 points) for regression, 1e-3 … 100 (6 points) for
/// classification.
pub fn default_etas(classification: bool) -> Vec<f64> {
    if classification {
        log_grid(1e-3, 100.0, 6)
    } else {
        log_grid(1e-4, 100.0, 7)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn folds_partition_indices() {
        let labels = Labels::Targets(DVector::zeros(23));
        let f = fold_indices(&labels, 5, 1).unwrap();
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(f.iter().all(|x| x.len() == 4 || x.len() == 5));
    }

    #[test]
    fn stratified_folds_balance_classes() {
        let c: Vec<i64> = (0..30).map(|i| (i % 3 == 0) as i64).collect();
        let f = fold_indices(&Labels::Classes(c.clone()), 5, 2).unwrap();
        for fold in &f {
            assert_eq!(fold.iter().filter(|&&i| c[i] == 1).count(), 2);
        }
        let err = fold_indices(&Labels::Classes(vec![0, 0, 0, 1]), 2, 0).unwrap_err();
        assert!(matches!(err, MvmlError::Config(_)));
    }

    #[test]
    fn default_grids() {
        let l = default_lambdas();
        assert_eq!(l.len(), 7);
        assert_eq!((l[0], l[2], l[6]), (1e-8, 1e-5, 10.0));
        assert!((l[1] - 10f64.powf(-6.5)).abs() < 1e-20);
        assert_eq!(
            default_etas(false),
            vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0]
        );
        assert_eq!(default_etas(true), vec![1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0]);
    }
}
