//! The `osmargin` command-line harness.
//!
//! Every subcommand resolves a [`RunConfig`], runs its experiment cells
//! (in parallel where there is more than one), and writes CSV artifacts whose
//! bytes depend only on the configuration. Exit codes: 0 success, 1 runtime
//! failure, 2 configuration error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{DataSource, DataSpec, ModelSpec, RunConfig, Task};
use crate::data::{self, LabeledDataset, SequenceDataset};
use crate::error::{Error, Result};
use crate::gradcheck::{self, SuiteResult};
use crate::losses::{HyperParams, LossKind};
use crate::models::Model;
use crate::train::{self, TrainConfig, TrainReport};

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "OSMARGIN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "osmargin", version, about = "One-sided margin loss benchmark harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write report.csv, summary.txt and model.ckpt.
    Train(RunArgs),
    /// One-factor-at-a-time OSM hyperparameter sweep (sweep.csv).
    Sweep(RunArgs),
    /// Loss comparison across datasets (compare.csv).
    Compare(RunArgs),
    /// Finite-difference gradient suites.
    Gradcheck(GradcheckArgs),
    /// OSM-CTC vs CTC on full and scaled-down models (ocr.csv).
    OcrCompare(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long, value_name = "KIND")]
    pub loss: Option<String>,
    #[arg(long, value_name = "N")]
    pub seed: Option<String>,
    #[arg(long, value_name = "N")]
    pub epochs: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub batch_size: Option<String>,
    #[arg(long, value_name = "RATE")]
    pub lr: Option<String>,
    #[arg(long, value_name = "N")]
    pub repeat: Option<String>,
    /// Override any config key, e.g. `--set train.alpha=0.5`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,
}

impl RunArgs {
    /// Flag overrides as `(section.key, value)`; named flags are applied
    /// after `--set` so they win on conflicts.
    pub fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects SECTION.KEY=VALUE, got {item:?}")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let named = [
            ("train.loss", self.loss.clone()),
            ("run.seed", self.seed.clone()),
            ("train.epochs", self.epochs.clone()),
            ("run.out", self.out.as_ref().map(|p| p.display().to_string())),
            ("train.batch_size", self.batch_size.clone()),
            ("train.lr", self.lr.clone()),
            ("run.repeat", self.repeat.clone()),
        ];
        out.extend(named.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        Ok(out)
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        RunConfig::load(&self.config, &self.overrides()?)
    }
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Optional config; only `run.seed` is read from it.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Random instances per suite.
    #[arg(long, value_name = "N", default_value_t = 100)]
    pub count: usize,
}

/// Maps an error onto the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        _ => 1,
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: &Command) -> Result<i32> {
    if let Command::Gradcheck(args) = command {
        return cmd_gradcheck(args);
    }
    let (args, name) = match command {
        Command::Train(a) => (a, "train"),
        Command::Sweep(a) => (a, "sweep"),
        Command::Compare(a) => (a, "compare"),
        Command::OcrCompare(a) => (a, "ocr-compare"),
        Command::Gradcheck(_) => unreachable!(),
    };
    let run = args.resolve()?;
    let pool = thread_pool()?;
    pool.install(|| match name {
        "train" => cmd_train(&run).map(drop),
        "sweep" => cmd_sweep(&run).map(drop),
        "compare" => cmd_compare(&run).map(drop),
        _ => cmd_ocr_compare(&run).map(drop),
    })?;
    Ok(0)
}

/// Worker pool sized by `OSMARGIN_THREADS` (unset or 0 means one per core).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Err(_) => 0,
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}")))?,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// Data and single runs

/// Train and eval splits for a classification source. Synthetic eval sets
/// use `seed + eval_seed_offset`; a CSV source without an eval file is
/// evaluated on its training rows.
pub fn classification_data(spec: &DataSpec, source: &DataSource, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let eval_seed = seed.wrapping_add(spec.eval_seed_offset);
    match source {
        DataSource::Blobs => Ok((
            data::gen_blobs(spec.n_per_class, spec.classes, spec.dim, spec.spread, seed)?,
            data::gen_blobs(spec.n_per_class, spec.classes, spec.dim, spec.spread, eval_seed)?,
        )),
        DataSource::Rings => Ok((
            data::gen_rings(spec.n_per_class, seed)?,
            data::gen_rings(spec.n_per_class, eval_seed)?,
        )),
        DataSource::Csv { train, eval } => {
            let (train_set, names) = data::load_csv(train)?;
            let eval_set = match eval {
                None => train_set.clone(),
                Some(path) => {
                    let (raw, eval_names) = data::load_csv(path)?;
                    relabel(raw, &eval_names, &names)?
                }
            };
            Ok((train_set, eval_set))
        }
        DataSource::Ocr => Err(Error::InvalidArgument("ocr data is not a classification source".into())),
    }
}

/// Re-index `set` (labelled by `from`) onto the class order of `to`.
fn relabel(set: LabeledDataset, from: &[String], to: &[String]) -> Result<LabeledDataset> {
    let index: Vec<usize> = from
        .iter()
        .map(|name| {
            to.iter()
                .position(|t| t == name)
                .ok_or_else(|| Error::InvalidArgument(format!("eval label {name:?} does not occur in the training file")))
        })
        .collect::<Result<_>>()?;
    let labels = set.labels.iter().map(|&l| index[l]).collect();
    LabeledDataset::new(set.features, labels, to.len())
}

pub fn ocr_data(spec: &DataSpec, seed: u64) -> Result<(SequenceDataset, SequenceDataset)> {
    Ok((
        data::gen_ocr_sequences(&spec.ocr, seed)?,
        data::gen_ocr_sequences(&spec.ocr, seed.wrapping_add(spec.eval_seed_offset))?,
    ))
}

/// One classification run; the model is initialized from `config.seed`.
pub fn classification_run(
    run: &RunConfig,
    source: &DataSource,
    config: &TrainConfig,
) -> Result<TrainReport> {
    let (train_set, eval_set) = classification_data(&run.data, source, config.seed)?;
    let outputs = config.loss.output_dim(train_set.class_count);
    let model = Model::init(run.model.build(train_set.dim(), outputs), config.seed)?;
    train::train_classifier(config, model, &train_set, &eval_set)
}

/// One sequence run with the given model shape.
pub fn ocr_run(run: &RunConfig, model: ModelSpec, config: &TrainConfig) -> Result<TrainReport> {
    let (train_set, eval_set) = ocr_data(&run.data, config.seed)?;
    let symbols = train_set.symbols();
    let init = Model::init(model.build(train_set.dim(), config.loss.output_dim(symbols)), config.seed)?;
    train::train_ctc(config, init, &train_set, &eval_set)
}

fn final_accuracy(report: &TrainReport) -> f64 {
    report.final_eval_accuracy().unwrap_or(0.0)
}

/// Mean and max-minus-min of `values`.
pub fn mean_range(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, hi - lo)
}

// ---------------------------------------------------------------------------
// train

pub fn cmd_train(run: &RunConfig) -> Result<TrainReport> {
    let report = match run.task {
        Task::Classification => classification_run(run, &run.data.source, &run.train)?,
        Task::Ocr => ocr_run(run, run.model, &run.train)?,
    };
    write_artifact(&run.out, "report.csv", &report.to_csv())?;
    write_artifact(&run.out, "summary.txt", &report.summary())?;
    write_artifact(&run.out, "model.ckpt", &report.model.to_checkpoint())?;
    print!("{}", report.summary());
    Ok(report)
}

// ---------------------------------------------------------------------------
// sweep

/// Why a sweep row was not run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok = 0,
    /// `lambda_max <= lambda_min`.
    MarginOrder = 1,
    /// Any other invalid hyperparameter (negative alpha, non-positive lambda, ...).
    InvalidValue = 2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// `alpha`, `lambda` or `margins`: the factor this row varies.
    pub block: &'static str,
    pub hp: HyperParams,
    pub status: RowStatus,
    /// Mean final eval accuracy over seeds; `None` for rejected rows.
    pub accuracy: Option<f64>,
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Rejected rows carry accuracy -1 and a nonzero status code.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# block,alpha,lambda,lambda_max,lambda_min,accuracy,accuracy_range,status\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.block,
                r.hp.alpha,
                r.hp.lambda,
                r.hp.lambda_max,
                r.hp.lambda_min,
                r.accuracy.unwrap_or(-1.0),
                r.range,
                r.status as i32
            );
        }
        out
    }
}

/// The grid rows in config order, with invalid points marked.
pub fn sweep_rows(run: &RunConfig) -> Vec<SweepRow> {
    let base = run.train.settings.hp;
    let sweep = &run.sweep;
    let points = sweep
        .alpha
        .iter()
        .map(|&alpha| ("alpha", HyperParams { alpha, ..base }))
        .chain(sweep.lambda.iter().map(|&lambda| ("lambda", HyperParams { lambda, ..base })))
        .chain(sweep.margins.iter().map(|&(lambda_max, lambda_min)| {
            (
                "margins",
                HyperParams {
                    lambda_max,
                    lambda_min,
                    ..base
                },
            )
        }));
    points
        .map(|(block, hp)| {
            let status = if hp.lambda_max <= hp.lambda_min {
                RowStatus::MarginOrder
            } else if hp.validate().is_err() {
                RowStatus::InvalidValue
            } else {
                RowStatus::Ok
            };
            SweepRow {
                block,
                hp,
                status,
                accuracy: None,
                range: 0.0,
            }
        })
        .collect()
}

pub fn sweep_table(run: &RunConfig) -> Result<SweepTable> {
    if run.sweep.is_empty() {
        return Err(Error::Config("[sweep] lists no alpha, lambda or margins values".into()));
    }
    if !run.train.loss.is_osm() {
        return Err(Error::Config(format!(
            "sweep varies OSM hyperparameters; train.loss = {} has none",
            run.train.loss
        )));
    }
    let mut rows = sweep_rows(run);
    let seeds: Vec<u64> = run.seeds().collect();
    let cells: Vec<(usize, u64)> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.status == RowStatus::Ok)
        .flat_map(|(i, _)| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Vec<f64> = cells
        .par_iter()
        .map(|&(i, seed)| {
            let mut config = run.train_for(run.train.loss, seed);
            config.settings.hp = rows[i].hp;
            let report = match run.task {
                Task::Classification => classification_run(run, &run.data.source, &config)?,
                Task::Ocr => ocr_run(run, run.model, &config)?,
            };
            Ok(final_accuracy(&report))
        })
        .collect::<Result<_>>()?;
    for (chunk, row) in results
        .chunks(seeds.len())
        .zip(rows.iter_mut().filter(|r| r.status == RowStatus::Ok))
    {
        let (mean, range) = mean_range(chunk);
        row.accuracy = Some(mean);
        row.range = range;
    }
    Ok(SweepTable { rows })
}

pub fn cmd_sweep(run: &RunConfig) -> Result<SweepTable> {
    let table = sweep_table(run)?;
    for r in table.rows.iter().filter(|r| r.status != RowStatus::Ok) {
        eprintln!(
            "rejected {} row (lambda_max={}, lambda_min={}, alpha={}, lambda={}): {}",
            r.block,
            r.hp.lambda_max,
            r.hp.lambda_min,
            r.hp.alpha,
            r.hp.lambda,
            match r.status {
                RowStatus::MarginOrder => "lambda_max must exceed lambda_min",
                _ => "invalid hyperparameter value",
            }
        );
    }
    let path = write_artifact(&run.out, "sweep.csv", &table.to_csv())?;
    println!("wrote {}", path.display());
    Ok(table)
}

// ---------------------------------------------------------------------------
// compare

#[derive(Debug, Clone, PartialEq)]
pub struct CompareTable {
    pub datasets: Vec<String>,
    pub losses: Vec<LossKind>,
    /// `accuracies[loss][dataset][seed]`.
    pub accuracies: Vec<Vec<Vec<f64>>>,
}

impl CompareTable {
    /// Index of the OSM row and of the baseline rows, if the table has both.
    fn improvement_rows(&self) -> Option<(usize, Vec<usize>)> {
        let osm = self.losses.iter().position(|l| l.is_osm())?;
        let baselines: Vec<usize> = (0..self.losses.len()).filter(|&i| !self.losses[i].is_osm()).collect();
        (!baselines.is_empty()).then_some((osm, baselines))
    }

    /// Per dataset: mean OSM accuracy minus the best mean baseline accuracy,
    /// and the range of the per-seed differences.
    pub fn improvement(&self) -> Option<Vec<(f64, f64)>> {
        let (osm, baselines) = self.improvement_rows()?;
        let out = (0..self.datasets.len())
            .map(|d| {
                let best = baselines
                    .iter()
                    .map(|&b| mean_range(&self.accuracies[b][d]).0)
                    .fold(f64::NEG_INFINITY, f64::max);
                let per_seed: Vec<f64> = (0..self.accuracies[osm][d].len())
                    .map(|s| {
                        let best_seed = baselines
                            .iter()
                            .map(|&b| self.accuracies[b][d][s])
                            .fold(f64::NEG_INFINITY, f64::max);
                        self.accuracies[osm][d][s] - best_seed
                    })
                    .collect();
                (mean_range(&self.accuracies[osm][d]).0 - best, mean_range(&per_seed).1)
            })
            .collect();
        Some(out)
    }

    pub fn mean(&self, loss: usize, dataset: usize) -> f64 {
        mean_range(&self.accuracies[loss][dataset]).0
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("# loss");
        for d in &self.datasets {
            let _ = write!(out, ",{d},{d}_range");
        }
        out.push('\n');
        for (i, loss) in self.losses.iter().enumerate() {
            out.push_str(loss.name());
            for d in 0..self.datasets.len() {
                let (mean, range) = mean_range(&self.accuracies[i][d]);
                let _ = write!(out, ",{mean},{range}");
            }
            out.push('\n');
        }
        if let Some(imp) = self.improvement() {
            out.push_str("improvement");
            for (mean, range) in imp {
                let _ = write!(out, ",{mean},{range}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn compare_table(run: &RunConfig) -> Result<CompareTable> {
    let spec = &run.compare;
    let seeds: Vec<u64> = run.seeds().collect();
    let mut cells = Vec::new();
    for l in 0..spec.losses.len() {
        for d in 0..spec.datasets.len() {
            cells.extend(seeds.iter().map(|&s| (l, d, s)));
        }
    }
    let results: Vec<f64> = cells
        .par_iter()
        .map(|&(l, d, seed)| {
            let config = run.train_for(spec.losses[l], seed);
            let report = match (&spec.datasets[d], run.task) {
                (DataSource::Ocr, _) | (_, Task::Ocr) => ocr_run(run, run.model, &config)?,
                (source, Task::Classification) => classification_run(run, source, &config)?,
            };
            Ok(final_accuracy(&report))
        })
        .collect::<Result<_>>()?;
    let mut it = results.into_iter();
    let accuracies = spec
        .losses
        .iter()
        .map(|_| {
            spec.datasets
                .iter()
                .map(|_| it.by_ref().take(seeds.len()).collect())
                .collect()
        })
        .collect();
    Ok(CompareTable {
        datasets: spec.datasets.iter().map(DataSource::label).collect(),
        losses: spec.losses.clone(),
        accuracies,
    })
}

pub fn cmd_compare(run: &RunConfig) -> Result<CompareTable> {
    let table = compare_table(run)?;
    let path = write_artifact(&run.out, "compare.csv", &table.to_csv())?;
    print!("{}", table.to_csv());
    println!("wrote {}", path.display());
    Ok(table)
}

// ---------------------------------------------------------------------------
// ocr-compare

#[derive(Debug, Clone, PartialEq)]
pub struct OcrRow {
    /// `full` or `scaled-down`.
    pub label: &'static str,
    pub hidden: usize,
    pub ctc: Vec<f64>,
    pub osm_ctc: Vec<f64>,
}

impl OcrRow {
    /// Mean OSM-CTC exact match minus mean CTC exact match.
    pub fn gap(&self) -> f64 {
        mean_range(&self.osm_ctc).0 - mean_range(&self.ctc).0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcrTable {
    pub rows: Vec<OcrRow>,
}

impl OcrTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# model,hidden,ctc,ctc_range,osm_ctc,osm_ctc_range,gap\n");
        for r in &self.rows {
            let (c, cr) = mean_range(&r.ctc);
            let (o, or) = mean_range(&r.osm_ctc);
            let _ = writeln!(out, "{},{},{c},{cr},{o},{or},{}", r.label, r.hidden, r.gap());
        }
        out
    }
}

pub fn ocr_table(run: &RunConfig) -> Result<OcrTable> {
    if run.task != Task::Ocr {
        return Err(Error::Config("ocr-compare needs run.task = ocr".into()));
    }
    let sizes = [("full", run.ocr.full_hidden), ("scaled-down", run.ocr.scaled_hidden)];
    let losses = [(LossKind::Ctc, run.ocr.lr_ctc), (LossKind::OsmCtc, run.ocr.lr_osm_ctc)];
    let seeds: Vec<u64> = run.seeds().collect();
    let mut cells = Vec::new();
    for m in 0..sizes.len() {
        for l in 0..losses.len() {
            cells.extend(seeds.iter().map(|&s| (m, l, s)));
        }
    }
    let results: Vec<f64> = cells
        .par_iter()
        .map(|&(m, l, seed)| {
            let (loss, lr) = losses[l];
            let mut config = run.train_for(loss, seed);
            config.optimizer = config.optimizer.with_initial_lr(lr);
            let report = ocr_run(run, ModelSpec::Mlp { hidden: sizes[m].1 }, &config)?;
            Ok(final_accuracy(&report))
        })
        .collect::<Result<_>>()?;
    let n = seeds.len();
    let rows = sizes
        .iter()
        .enumerate()
        .map(|(m, &(label, hidden))| {
            let base = m * 2 * n;
            OcrRow {
                label,
                hidden,
                ctc: results[base..base + n].to_vec(),
                osm_ctc: results[base + n..base + 2 * n].to_vec(),
            }
        })
        .collect();
    Ok(OcrTable { rows })
}

pub fn cmd_ocr_compare(run: &RunConfig) -> Result<OcrTable> {
    let table = ocr_table(run)?;
    let path = write_artifact(&run.out, "ocr.csv", &table.to_csv())?;
    print!("{}", table.to_csv());
    println!("wrote {}", path.display());
    Ok(table)
}

// ---------------------------------------------------------------------------
// gradcheck

pub fn gradcheck_report(seed: u64, count: usize) -> Vec<SuiteResult> {
    gradcheck::default_suites()
        .par_iter()
        .map(|suite| gradcheck::run_suite(suite, seed, count))
        .collect()
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<i32> {
    let seed = match (args.seed, &args.config) {
        (Some(s), _) => s,
        (None, Some(path)) => RunConfig::load(path, &[])?.seed,
        (None, None) => 0,
    };
    if args.count == 0 {
        eprintln!("warning: --count 0 checks nothing");
    }
    let results = thread_pool()?.install(|| gradcheck_report(seed, args.count));
    let mut all_pass = true;
    for r in &results {
        all_pass &= r.passed();
        println!(
            "{:<22} max_rel_err {:.3e}  threshold {:.0e}  instances {:>4}  {}",
            r.name,
            r.max_error,
            r.threshold,
            r.instances,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
    Ok(if all_pass { 0 } else { 1 })
}
