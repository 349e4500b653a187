//! Multi-view datasets on disk.
//!
//! A dataset is a key-value manifest plus one delimited text matrix per view
//! and a label file:
//!
//! ```text
//! # comments start with '#'
//! task = classification          # or regression
//! labels = labels.csv
//! header = true                  # first non-comment row of every file is a header
//! view.0.name = original
//! view.0.file = view0.csv
//! view.0.kernel = gaussian       # or linear
//! view.0.sigma = mean_distance   # or inv_features, or a number
//! ```
//!
//! Paths are relative to the manifest. Values are separated by commas and/or
//! whitespace.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use mvml::kernels::{BandwidthPolicy, KernelConfig, KernelPolicy};
use mvml::{MvmlError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Classes(Vec<i64>),
    Targets(DVector<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(c) => c.len(),
            Labels::Targets(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, Labels::Classes(_))
    }

    pub fn select(&self, idx: &[usize]) -> Labels {
        match self {
            Labels::Classes(c) => Labels::Classes(idx.iter().map(|&i| c[i]).collect()),
            Labels::Targets(t) => Labels::Targets(t.select_rows(idx)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    /// One `n × d_l` matrix per view, one sample per row.
    pub views: Vec<DMatrix<f64>>,
    pub labels: Labels,
    pub view_names: Vec<String>,
    pub kernels: Vec<KernelPolicy>,
}

impl MultiViewDataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn v(&self) -> usize {
        self.views.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.views.is_empty() {
            return Err(MvmlError::Input("dataset has no views".into()));
        }
        if self.view_names.len() != self.v() || self.kernels.len() != self.v() {
            return Err(MvmlError::Input(
                "view names and kernels must match the views".into(),
            ));
        }
        for (x, name) in self.views.iter().zip(&self.view_names) {
            if x.nrows() != n {
                return Err(MvmlError::Input(format!(
                    "view `{name}` has {} rows but there are {n} labels",
                    x.nrows()
                )));
            }
            if x.iter().any(|a| !a.is_finite()) {
                return Err(MvmlError::Input(format!(
                    "view `{name}` has non-finite values"
                )));
            }
        }
        Ok(())
    }

    /// Rows `idx` of every view and the matching labels.
    pub fn subset(&self, idx: &[usize]) -> MultiViewDataset {
        MultiViewDataset {
            views: self.views.iter().map(|x| x.select_rows(idx)).collect(),
            labels: self.labels.select(idx),
            view_names: self.view_names.clone(),
            kernels: self.kernels.clone(),
        }
    }

    /// Kernel configs with bandwidths resolved on this dataset's samples.
    pub fn resolve_kernels(&self) -> Result<Vec<KernelConfig>> {
        self.kernels
            .iter()
            .zip(&self.views)
            .map(|(p, x)| p.resolve(x))
            .collect()
    }
}

fn io_err(path: &Path, e: std::io::Error) -> MvmlError {
    MvmlError::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> MvmlError {
    MvmlError::Input(format!("{}:{line}: {msg}", path.display()))
}

/// Non-comment, non-blank lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn tokens(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
}

/// Reads a delimited numeric matrix, one sample per row.
pub fn read_matrix(path: &Path, header: bool) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, content) in data_lines(&text).skip(header as usize) {
        let row = tokens(content)
            .map(|t| match t.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                Ok(_) => Err(parse_err(path, line, format!("non-finite value `{t}`"))),
                Err(_) => Err(parse_err(
                    path,
                    line,
                    format!("cannot parse `{t}` as a number"),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(
                    path,
                    line,
                    format!("{} columns, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Reads the first column of a label file.
pub fn read_labels(path: &Path, header: bool, classification: bool) -> Result<Labels> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut classes = Vec::new();
    let mut targets = Vec::new();
    for (line, content) in data_lines(&text).skip(header as usize) {
        let t = tokens(content).next().unwrap_or_default();
        if classification {
            let c = t.parse::<i64>().ok().or_else(|| {
                t.parse::<f64>()
                    .ok()
                    .filter(|x| x.fract() == 0.0 && x.abs() < 2f64.powi(53))
                    .map(|x| x as i64)
            });
            classes
                .push(c.ok_or_else(|| parse_err(path, line, format!("`{t}` is not a class id")))?);
        } else {
            match t.parse::<f64>() {
                Ok(x) if x.is_finite() => targets.push(x),
                _ => {
                    return Err(parse_err(
                        path,
                        line,
                        format!("cannot parse `{t}` as a number"),
                    ))
                }
            }
        }
    }
    Ok(if classification {
        Labels::Classes(classes)
    } else {
        Labels::Targets(DVector::from_vec(targets))
    })
}

pub fn parse_policy(
    kernel: &str,
    sigma: Option<&str>,
) -> std::result::Result<KernelPolicy, String> {
    match kernel {
        "linear" => Ok(KernelPolicy::Linear),
        "gaussian" => {
            let bw = match sigma.unwrap_or("mean_distance") {
                "mean_distance" => BandwidthPolicy::MeanDistance,
                "inv_features" => BandwidthPolicy::InverseFeatures,
                s => match s.parse::<f64>() {
                    Ok(x) if x > 0.0 && x.is_finite() => BandwidthPolicy::Fixed(x),
                    _ => return Err(format!("invalid sigma `{s}`")),
                },
            };
            Ok(KernelPolicy::Gaussian(bw))
        }
        k => Err(format!("unknown kernel `{k}`")),
    }
}

fn policy_string(p: &KernelPolicy) -> (String, Option<String>) {
    match p {
        KernelPolicy::Linear => ("linear".into(), None),
        KernelPolicy::Gaussian(bw) => (
            "gaussian".into(),
            Some(match bw {
                BandwidthPolicy::MeanDistance => "mean_distance".into(),
                BandwidthPolicy::InverseFeatures => "inv_features".into(),
                BandwidthPolicy::Fixed(s) => s.to_string(),
            }),
        ),
    }
}

/// Loads and validates the dataset described by a manifest.
pub fn load_dataset(manifest: &Path) -> Result<MultiViewDataset> {
    let text = fs::read_to_string(manifest).map_err(|e| io_err(manifest, e))?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let mut keys: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (line, content) in data_lines(&text) {
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| parse_err(manifest, line, "expected `key = value`"))?;
        keys.insert(k.trim().to_string(), (line, v.trim().to_string()));
    }
    let get = |k: &str| keys.get(k).map(|(_, v)| v.as_str());
    let require = |k: &str| {
        get(k).ok_or_else(|| MvmlError::Input(format!("{}: missing key `{k}`", manifest.display())))
    };

    let classification = match require("task")? {
        "classification" => true,
        "regression" => false,
        t => {
            let line = keys["task"].0;
            return Err(parse_err(manifest, line, format!("unknown task `{t}`")));
        }
    };
    let header = match get("header").unwrap_or("false") {
        "true" => true,
        "false" => false,
        h => {
            return Err(parse_err(
                manifest,
                keys["header"].0,
                format!("invalid header flag `{h}`"),
            ))
        }
    };
    let labels = read_labels(&dir.join(require("labels")?), header, classification)?;

    let mut views = Vec::new();
    let mut view_names = Vec::new();
    let mut kernels = Vec::new();
    for l in 0.. {
        let Some(file) = get(&format!("view.{l}.file")) else {
            break;
        };
        let kernel = get(&format!("view.{l}.kernel")).unwrap_or("gaussian");
        let sigma = get(&format!("view.{l}.sigma"));
        let policy = parse_policy(kernel, sigma).map_err(|m| {
            let line = keys
                .get(&format!("view.{l}.sigma"))
                .or_else(|| keys.get(&format!("view.{l}.kernel")))
                .map_or(0, |k| k.0);
            parse_err(manifest, line, m)
        })?;
        let path = dir.join(file);
        let x = read_matrix(&path, header)?;
        if x.nrows() != labels.len() {
            return Err(MvmlError::Input(format!(
                "{}: {} rows but the label file has {}",
                path.display(),
                x.nrows(),
                labels.len()
            )));
        }
        views.push(x);
        view_names.push(get(&format!("view.{l}.name")).unwrap_or(file).to_string());
        kernels.push(policy);
    }
    if let Some((k, (line, _))) = keys.iter().find(|(k, _)| {
        k.strip_prefix("view.")
            .and_then(|r| r.split('.').next())
            .and_then(|i| i.parse::<usize>().ok())
            .is_some_and(|i| i >= views.len())
    }) {
        return Err(parse_err(
            manifest,
            *line,
            format!("`{k}` refers to a view without a file or after a gap"),
        ));
    }
    if views.is_empty() {
        return Err(MvmlError::Input(format!(
            "{}: no views declared",
            manifest.display()
        )));
    }
    let ds = MultiViewDataset {
        views,
        labels,
        view_names,
        kernels,
    };
    ds.validate()?;
    Ok(ds)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Writes the dataset as `manifest.txt`, `labels.csv` and `view<l>.csv` in
/// `dir` and returns the manifest path. Values round-trip exactly.
pub fn write_dataset(dir: &Path, ds: &MultiViewDataset) -> Result<PathBuf> {
    ds.validate()?;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut manifest = String::new();
    let task = if ds.labels.is_classification() {
        "classification"
    } else {
        "regression"
    };
    writeln!(
        manifest,
        "task = {task}\nlabels = labels.csv\nheader = true"
    )
    .unwrap();

    let mut labels = String::from("label\n");
    match &ds.labels {
        Labels::Classes(c) => c.iter().for_each(|c| writeln!(labels, "{c}").unwrap()),
        Labels::Targets(t) => t.iter().for_each(|t| writeln!(labels, "{t}").unwrap()),
    }
    write_file(&dir.join("labels.csv"), &labels)?;

    for (l, ((x, name), policy)) in ds
        .views
        .iter()
        .zip(&ds.view_names)
        .zip(&ds.kernels)
        .enumerate()
    {
        let file = format!("view{l}.csv");
        write_file(&dir.join(&file), &matrix_csv(x, "x"))?;
        let (kernel, sigma) = policy_string(policy);
        writeln!(
            manifest,
            "view.{l}.name = {name}\nview.{l}.file = {file}\nview.{l}.kernel = {kernel}"
        )
        .unwrap();
        if let Some(s) = sigma {
            writeln!(manifest, "view.{l}.sigma = {s}").unwrap();
        }
    }
    let path = dir.join("manifest.txt");
    write_file(&path, &manifest)?;
    Ok(path)
}

/// CSV with a `prefix0,prefix1,…` header row.
pub fn matrix_csv(x: &DMatrix<f64>, prefix: &str) -> String {
    let mut out = (0..x.ncols())
        .map(|j| format!("{prefix}{j}"))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for row in x.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    fn two_view_dir(rows_b: &str) -> tempfile::TempDir {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "a.txt", "1 2\n3 4\n5 6\n");
        write(d.path(), "b.txt", rows_b);
        write(d.path(), "y.txt", "0\n1\n1\n");
        write(
            d.path(),
            "m.txt",
            "task = classification\nlabels = y.txt\nview.0.file = a.txt\nview.0.kernel = linear\n\
             view.1.file = b.txt\nview.1.kernel = gaussian\nview.1.sigma = 0.5\n",
        );
        d
    }

    #[test]
    fn well_formed_two_views() {
        let d = two_view_dir("1,0\n0,1 # comment\n\n2,2\n");
        let ds = load_dataset(&d.path().join("m.txt")).unwrap();
        assert_eq!((ds.n(), ds.v()), (3, 2));
        assert_eq!(ds.views[1][(2, 1)], 2.0);
        assert_eq!(
            ds.kernels[1],
            KernelPolicy::Gaussian(BandwidthPolicy::Fixed(0.5))
        );
        assert_eq!(ds.labels, Labels::Classes(vec![0, 1, 1]));
    }

    #[test]
    fn row_count_mismatch() {
        let d = two_view_dir("1 0\n0 1\n2 2\n3 3\n");
        let e = load_dataset(&d.path().join("m.txt"))
            .unwrap_err()
            .to_string();
        assert!(e.contains("b.txt") && e.contains("4 rows"), "{e}");
    }

    #[test]
    fn bad_label_names_line() {
        let d = two_view_dir("1 0\n0 1\n2 2\n");
        write(d.path(), "y.txt", "0\n# note\nabc\n1\n");
        let e = load_dataset(&d.path().join("m.txt"))
            .unwrap_err()
            .to_string();
        assert!(e.contains("y.txt:3") && e.contains("abc"), "{e}");
    }

    #[test]
    fn bad_number_names_file_and_line() {
        let d = two_view_dir("1 0\n0 x1\n2 2\n");
        let e = load_dataset(&d.path().join("m.txt"))
            .unwrap_err()
            .to_string();
        assert!(e.contains("b.txt:2"), "{e}");
    }

    #[test]
    fn missing_manifest_names_path() {
        let e = load_dataset(Path::new("/nonexistent/m.txt"))
            .unwrap_err()
            .to_string();
        assert!(e.contains("/nonexistent/m.txt"), "{e}");
    }

    #[test]
    fn write_then_load_round_trips() {
        let d = tempfile::tempdir().unwrap();
        let ds = MultiViewDataset {
            views: vec![
                DMatrix::from_row_slice(2, 2, &[0.1, 1e-300, -3.0, 1.0 / 3.0]),
                DMatrix::from_row_slice(2, 1, &[7.0, f64::MAX]),
            ],
            labels: Labels::Targets(DVector::from_vec(vec![0.5, -2.25])),
            view_names: vec!["a".into(), "b".into()],
            kernels: vec![
                KernelPolicy::Gaussian(BandwidthPolicy::InverseFeatures),
                KernelPolicy::Gaussian(BandwidthPolicy::Fixed(0.3)),
            ],
        };
        let m = write_dataset(d.path(), &ds).unwrap();
        assert_eq!(load_dataset(&m).unwrap(), ds);
    }
}
