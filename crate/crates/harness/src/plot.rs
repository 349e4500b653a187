//! CSV files for plotting an experiment report.
//!
//! * `summary.csv`: metric against Nyström fraction per method.
//! * `runs.csv`: one row per (method, fraction, seed).
//! * `metric_<method>_f<fraction>_s<seed>.csv`: a learned metric, with
//!   `..._groups.csv` holding the row/column offset where each view's block starts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mvml::{MvmlError, Result};

use crate::dataset::matrix_csv;
use crate::experiment::{MetricDump, Report};

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| {
        MvmlError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn clean(msg: &str) -> String {
    msg.replace([',', '\n', '\r'], ";")
}

pub fn summary_csv(report: &Report) -> String {
    let m = &report.metric;
    let mut s = format!("method,fraction,runs,failed,{m}_mean,{m}_std,r2_mean,fit_seconds_mean\n");
    for r in &report.summary {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.method,
            r.fraction,
            r.runs,
            r.failed,
            r.mean,
            r.std,
            opt(r.r2_mean),
            r.fit_seconds_mean
        )
        .unwrap();
    }
    s
}

pub fn runs_csv(report: &Report) -> String {
    let mut s = format!(
        "method,fraction,seed,lambda,eta,{},r2,fit_seconds,status\n",
        report.metric
    );
    for r in &report.runs {
        let status = r
            .error
            .as_deref()
            .map_or("ok".to_string(), |e| format!("failed: {}", clean(e)));
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            r.fraction,
            r.seed,
            r.lambda,
            r.eta,
            opt(r.metric),
            opt(r.r2),
            opt(r.fit_seconds),
            status
        )
        .unwrap();
    }
    s
}

fn dump_stem(d: &MetricDump) -> String {
    format!("metric_{}_f{}_s{}", d.method, d.fraction, d.seed)
}

/// Writes every plot file into `dir` (created if missing) and returns the paths.
pub fn emit_plot_data(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| {
        MvmlError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", dir.display()),
        ))
    })?;
    let mut out = Vec::new();
    let mut put = |name: String, text: String| -> Result<()> {
        let p = dir.join(name);
        write(&p, &text)?;
        out.push(p);
        Ok(())
    };
    put("summary.csv".into(), summary_csv(report))?;
    put("runs.csv".into(), runs_csv(report))?;
    for d in &report.metrics {
        let stem = dump_stem(d);
        put(format!("{stem}.csv"), matrix_csv(d.metric.entries(), "a"))?;
        let size = d.metric.block_size();
        let mut g = String::from("view,offset,size\n");
        for l in 0..d.metric.views() {
            writeln!(g, "{l},{},{size}", l * size).unwrap();
        }
        put(format!("{stem}_groups.csv"), g)?;
    }
    Ok(out)
}

/// Header and rows of a comma-separated file with a header line.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path).map_err(|e| {
        MvmlError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| MvmlError::Input(format!("{}: empty file", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .enumerate()
        .map(|(i, l)| {
            let row: Vec<String> = l.split(',').map(str::to_string).collect();
            if row.len() != header.len() {
                return Err(MvmlError::Input(format!(
                    "{}:{}: {} fields, header has {}",
                    path.display(),
                    i + 2,
                    row.len(),
                    header.len()
                )));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, rows))
}

/// Column `name` of a table as numbers; empty cells become `None`.
pub fn numeric_column(
    header: &[String],
    rows: &[Vec<String>],
    name: &str,
) -> Result<Vec<Option<f64>>> {
    let j = header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| MvmlError::Input(format!("no column `{name}`")))?;
    rows.iter()
        .map(|r| {
            let cell = r[j].trim();
            if cell.is_empty() {
                Ok(None)
            } else {
                cell.parse()
                    .map(Some)
                    .map_err(|_| MvmlError::Input(format!("column `{name}`: bad number `{cell}`")))
            }
        })
        .collect()
}
