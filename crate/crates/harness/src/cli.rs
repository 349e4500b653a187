//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use mvml::model::{rademacher_bound, save, BoundInputs};
use mvml::multiview::build_gram_stack;
use mvml::{MvmlError, Result};

use crate::cv::{cross_validate, default_etas, default_lambdas, CvConfig};
use crate::dataset::{load_dataset, matrix_csv, write_dataset, Labels, MultiViewDataset};
use crate::experiment::{run_experiment, ExperimentConfig};
use crate::method::{metric_kind, train, FitSettings, Method, Trained};
use crate::plot::emit_plot_data;
use crate::toy::{toy_generate, DEFAULT_ANGLE, DEFAULT_SHEAR};

#[derive(Debug, Parser)]
#[command(name = "mvml", version, about = "Multi-view kernel metric learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a metric-learning model and save it.
    Fit(FitArgs),
    /// Apply a saved model to a dataset and score it.
    Predict(PredictArgs),
    /// Grid-search λ and η by k-fold cross-validation.
    Cv(CvArgs),
    /// Write the two-view toy dataset.
    Toy(ToyArgs),
    /// Evaluate the Rademacher complexity bound.
    Bound(BoundArgs),
    /// Run an experiment config and write the plot tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Hyper {
    #[arg(long, default_value_t = FitSettings::default().lambda)]
    pub lambda: f64,
    #[arg(long, default_value_t = FitSettings::default().eta)]
    pub eta: f64,
    /// Gradient step size for the metric update.
    #[arg(long, default_value_t = FitSettings::default().mu)]
    pub mu: f64,
    #[arg(long, default_value_t = FitSettings::default().max_iters)]
    pub max_iters: usize,
    #[arg(long, default_value_t = FitSettings::default().tol)]
    pub tol: f64,
    /// Also learn the view-combination weights.
    #[arg(long)]
    pub learn_w: bool,
    /// Nyström level p/n; 1 fits the full kernels.
    #[arg(long, default_value_t = 1.0)]
    pub fraction: f64,
    /// Seed for Nyström anchor sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl Hyper {
    fn settings(&self) -> FitSettings {
        FitSettings {
            lambda: self.lambda,
            eta: self.eta,
            mu: self.mu,
            max_iters: self.max_iters,
            tol: self.tol,
            learn_w: self.learn_w,
            fraction: self.fraction,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset manifest, or a directory containing `manifest.txt`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "mvml")]
    pub method: Method,
    /// Where to write the model.
    #[arg(long)]
    pub model: PathBuf,
    /// Optional CSV dump of the learned metric (first head).
    #[arg(long)]
    pub metric_out: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: Hyper,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Predictions CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-view outputs of the first head, one column per view.
    #[arg(long)]
    pub views_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "mvml")]
    pub method: Method,
    /// Comma-separated λ grid; defaults to 1e-8 … 10.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Vec<f64>,
    /// Comma-separated η grid; defaults depend on the task.
    #[arg(long, value_delimiter = ',')]
    pub etas: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    /// Seed for the fold assignment.
    #[arg(long, default_value_t = 0)]
    pub cv_seed: u64,
    /// Fold table CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: Hyper,
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    /// Samples per class.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_SHEAR)]
    pub shear: f64,
    /// Rotation in radians.
    #[arg(long, default_value_t = DEFAULT_ANGLE)]
    pub angle: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Comma-separated tr(K_l²) per view.
    #[arg(
        long,
        value_delimiter = ',',
        requires = "n",
        conflicts_with = "manifest"
    )]
    pub traces: Vec<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Compute the traces from a dataset instead.
    #[arg(long, required_unless_present = "traces")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: PathBuf,
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("manifest.txt")
    } else {
        p.to_path_buf()
    }
}

fn load_data(p: &Path) -> Result<MultiViewDataset> {
    load_dataset(&manifest_path(p))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| {
        MvmlError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn fit(a: &FitArgs) -> Result<()> {
    if a.method.is_krr() {
        return Err(MvmlError::Config(format!(
            "{} has no saved-model form; use `report` to evaluate baselines",
            a.method
        )));
    }
    let ds = load_data(&a.manifest)?;
    let trained = train(a.method, &ds, &a.hyper.settings())?;
    let Trained::Mvml(fitted) = &trained else {
        unreachable!("metric-learning method")
    };
    save(&fitted.model, &a.model).map_err(|e| with_path(&a.model, e))?;
    let (name, _) = metric_kind(&ds.labels);
    let score = trained.evaluate(&ds)?.metric;
    println!(
        "{} on {} samples, {} views: training {name} {score:.4}, {:.3} s",
        a.method,
        ds.n(),
        ds.v(),
        fitted.fit_seconds
    );
    for (k, st) in fitted.states.iter().enumerate() {
        log::info!(
            "head {k}: {} iterations, converged {}",
            st.iterations,
            st.converged
        );
    }
    println!("model written to {}", a.model.display());
    if let Some(p) = &a.metric_out {
        write_text(p, &matrix_csv(fitted.states[0].a.entries(), "a"))?;
    }
    Ok(())
}

fn predict(a: &PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let ds = load_data(&a.manifest)?;
    let mut table;
    match &ds.labels {
        Labels::Classes(truth) => {
            let pred = model.predict_classes(&ds.views)?;
            println!("accuracy: {:.4}", mvml::model::accuracy(&pred, truth)?);
            table = String::from("class\n");
            pred.iter().for_each(|c| writeln!(table, "{c}").unwrap());
        }
        Labels::Targets(y) => {
            let pred = model.predict(&ds.views)?;
            let e = mvml::model::nmse(&pred, y)?;
            println!("nmse: {e:.6}\nr2: {:.6}", 1.0 - e);
            table = String::from("prediction\n");
            pred.iter().for_each(|p| writeln!(table, "{p}").unwrap());
        }
    }
    if let Some(p) = &a.out {
        write_text(p, &table)?;
    }
    if let Some(p) = &a.views_out {
        write_text(p, &matrix_csv(&model.predict_views(&ds.views)?, "view"))?;
    }
    Ok(())
}

fn with_path(p: &Path, e: MvmlError) -> MvmlError {
    match e {
        MvmlError::Io(io) => MvmlError::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", p.display()),
        )),
        other => other,
    }
}

fn load_model(p: &Path) -> Result<mvml::model::ModelState> {
    mvml::model::load(p).map_err(|e| with_path(p, e))
}

fn cv(a: &CvArgs) -> Result<()> {
    let ds = load_data(&a.manifest)?;
    let cfg = CvConfig {
        method: a.method,
        lambdas: if a.lambdas.is_empty() {
            default_lambdas()
        } else {
            a.lambdas.clone()
        },
        etas: if a.etas.is_empty() {
            default_etas(ds.labels.is_classification())
        } else {
            a.etas.clone()
        },
        folds: a.folds,
        seed: a.cv_seed,
        base: a.hyper.settings(),
    };
    let r = cross_validate(&ds, &cfg)?;
    let mut table = String::from("lambda,eta,mean");
    (0..a.folds).for_each(|f| write!(table, ",fold{f}").unwrap());
    table.push('\n');
    for c in &r.cells {
        let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        write!(table, "{},{},{}", c.lambda, c.eta, cell(c.mean)).unwrap();
        c.fold_scores
            .iter()
            .for_each(|s| write!(table, ",{}", cell(*s)).unwrap());
        table.push('\n');
    }
    print!("{table}");
    println!(
        "best: lambda {} eta {} ({})",
        r.best_lambda, r.best_eta, r.metric
    );
    if let Some(p) = &a.out {
        write_text(p, &table)?;
    }
    Ok(())
}

fn toy(a: &ToyArgs) -> Result<()> {
    if a.n == 0 {
        return Err(MvmlError::Config("--n must be at least 1".into()));
    }
    let ds = toy_generate(a.n, a.seed, a.shear, a.angle);
    let manifest = write_dataset(&a.out, &ds)?;
    println!("wrote {}", manifest.display());
    Ok(())
}

fn bound(a: &BoundArgs) -> Result<()> {
    let inputs = match &a.manifest {
        Some(m) => {
            let ds = load_data(m)?;
            let grams = build_gram_stack(&ds.views, &ds.resolve_kernels()?)?;
            BoundInputs::from_grams(a.alpha, a.beta, &grams)
        }
        None => BoundInputs {
            alpha: a.alpha,
            beta: a.beta,
            traces: a.traces.clone(),
            n: a.n.expect("clap enforces --n"),
        },
    };
    let b = rademacher_bound(&inputs)?;
    println!(
        "exact: {}\ntau_form: {}\ntau: {}",
        b.exact, b.tau_form, b.tau
    );
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let r = run_experiment(&cfg)?;
    let files = emit_plot_data(&r, &cfg.output)?;
    println!(
        "{:<12} {:>8} {:>5} {:>12} {:>12} {:>10}",
        "method", "fraction", "runs", r.metric, "std", "seconds"
    );
    for s in &r.summary {
        println!(
            "{:<12} {:>8} {:>5} {:>12.6} {:>12.6} {:>10.4}",
            s.method.name(),
            s.fraction,
            s.runs - s.failed,
            s.mean,
            s.std,
            s.fit_seconds_mean
        );
    }
    println!("{} files written to {}", files.len(), cfg.output.display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Cv(a) => cv(a),
        Command::Toy(a) => toy(a),
        Command::Bound(a) => bound(a),
        Command::Report(a) => report(a),
    }
}

/// Parses `argv` and runs the command. Returns the process exit code: 0 on
/// success, 1 on a runtime error, 2 on a usage error.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
