//! Experiment configuration files.
//!
//! The format is flat `key = value` text grouped under `[section]` headers:
//!
//! ```text
//! # comment lines start with '#'; blank lines are ignored
//! [run]
//! task = classification
//! seed = 3
//!
//! [sweep]
//! # lists are comma separated; margins are lambda_max:lambda_min pairs
//! alpha = 0.01, 0.1, 1
//! margins = 600:100, 500:0
//! ```
//!
//! Rules:
//!
//! - A statement is either a header `[name]` or `key = value`. Whitespace
//!   around keys, values and list items is trimmed.
//! - Keys that appear before the first header belong to `[run]`.
//! - `#` starts a comment only at the beginning of a line; values may not
//!   carry trailing comments.
//! - Every key must be one of [`KNOWN_KEYS`]; duplicates are an error.
//! - Omitted keys take defaults keyed by `run.task` (see [`RunConfig`]).
//!
//! Command-line flags are applied with [`ConfigFile::set`] before defaults
//! are resolved, so an override behaves exactly as if the key had been
//! written in the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::OcrGenConfig;
use crate::error::{Error, Result};
use crate::losses::{HyperParams, LossKind, LossSettings};
use crate::models::ModelConfig;
use crate::optim::{AdamConfig, LrSchedule, OptimizerConfig, SgdConfig};
use crate::train::TrainConfig;

/// Every accepted `section.key`.
pub const KNOWN_KEYS: &[&str] = &[
    "run.task",
    "run.seed",
    "run.repeat",
    "run.out",
    "data.source",
    "data.n_per_class",
    "data.classes",
    "data.dim",
    "data.spread",
    "data.train",
    "data.eval",
    "data.eval_seed_offset",
    "data.count",
    "data.alphabet",
    "data.min_len",
    "data.max_len",
    "data.repeats",
    "data.noise",
    "model.kind",
    "model.hidden",
    "train.loss",
    "train.epochs",
    "train.batch_size",
    "train.optimizer",
    "train.lr",
    "train.momentum",
    "train.weight_decay",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.schedule",
    "train.period",
    "train.warmup",
    "train.min_lr",
    "train.decay_rate",
    "train.alpha",
    "train.lambda",
    "train.lambda_min",
    "train.lambda_max",
    "train.hinge_margin",
    "sweep.alpha",
    "sweep.lambda",
    "sweep.margins",
    "compare.losses",
    "compare.datasets",
    "ocr.full_hidden",
    "ocr.scaled_hidden",
    "ocr.lr_osm_ctc",
    "ocr.lr_ctc",
];

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    /// 1-based line in the file; 0 for command-line overrides.
    line: usize,
}

/// Raw `section.key -> value` map, before defaults are applied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, Entry>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut section = String::from("run");
        let mut file = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .map(str::trim)
                    .filter(|n| !n.is_empty() && !n.contains(char::is_whitespace))
                    .ok_or_else(|| Error::Config(format!("line {line}: malformed section header {trimmed:?}")))?;
                section = name.to_string();
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected `key = value`, got {trimmed:?}")))?;
            let key = format!("{section}.{}", key.trim());
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("line {line}: unknown key `{key}`")));
            }
            if let Some(prev) = file.entries.get(&key) {
                return Err(Error::Config(format!(
                    "line {line}: duplicate key `{key}` (first set on line {})",
                    prev.line
                )));
            }
            file.entries.insert(
                key,
                Entry {
                    value: value.trim().to_string(),
                    line,
                },
            );
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Set or replace a key, as a command-line flag does.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.trim().to_string(),
                line: 0,
            },
        );
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn origin(&self, key: &str) -> String {
        match self.entries.get(key) {
            Some(Entry { line: 0, .. }) => format!("`{key}` (command line)"),
            Some(Entry { line, .. }) => format!("`{key}` (line {line})"),
            None => format!("`{key}`"),
        }
    }

    fn parsed<T: FromStr>(&self, key: &str, default: T, what: &str) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{}: expected {what}, got {v:?}", self.origin(key)))),
        }
    }

    fn real(&self, key: &str, default: f64) -> Result<f64> {
        let v: f64 = self.parsed(key, default, "a number")?;
        if !v.is_finite() {
            return Err(Error::Config(format!("{}: must be finite", self.origin(key))));
        }
        Ok(v)
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        self.parsed(key, default, "a non-negative integer")
    }

    fn list(&self, key: &str) -> Option<Vec<&str>> {
        self.get(key)
            .map(|v| v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect())
    }

    fn real_list(&self, key: &str) -> Result<Vec<f64>> {
        self.list(key)
            .unwrap_or_default()
            .into_iter()
            .map(|item| {
                item.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Config(format!("{}: {item:?} is not a finite number", self.origin(key))))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classification,
    Ocr,
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "classification" => Ok(Task::Classification),
            "ocr" => Ok(Task::Ocr),
            _ => Err(format!("unknown task {s:?}")),
        }
    }
}

/// Where a labeled dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Blobs,
    Rings,
    Csv { train: PathBuf, eval: Option<PathBuf> },
    /// Synthetic OCR sequences; only valid for `task = ocr`.
    Ocr,
}

impl DataSource {
    /// Short label used as a column name in comparison tables.
    pub fn label(&self) -> String {
        match self {
            DataSource::Blobs => "blobs".into(),
            DataSource::Rings => "rings".into(),
            DataSource::Ocr => "ocr".into(),
            DataSource::Csv { train, .. } => {
                let stem = train.file_stem().map(|s| s.to_string_lossy().into_owned());
                format!("csv:{}", stem.unwrap_or_default())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub source: DataSource,
    pub n_per_class: usize,
    pub classes: usize,
    pub dim: usize,
    pub spread: f64,
    /// Synthetic eval sets are generated with `seed + eval_seed_offset`.
    pub eval_seed_offset: u64,
    pub ocr: OcrGenConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    Linear,
    Mlp { hidden: usize },
}

impl ModelSpec {
    pub fn build(self, inputs: usize, outputs: usize) -> ModelConfig {
        match self {
            ModelSpec::Linear => ModelConfig::Linear { inputs, outputs },
            ModelSpec::Mlp { hidden } => ModelConfig::Mlp {
                inputs,
                hidden,
                outputs,
            },
        }
    }
}

/// One-factor-at-a-time grids. Each list varies one quantity while the
/// others stay at the `[train]` values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepSpec {
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `(lambda_max, lambda_min)` pairs.
    pub margins: Vec<(f64, f64)>,
}

impl SweepSpec {
    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty() && self.lambda.is_empty() && self.margins.is_empty()
    }

    pub fn len(&self) -> usize {
        self.alpha.len() + self.lambda.len() + self.margins.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSpec {
    pub losses: Vec<LossKind>,
    pub datasets: Vec<DataSource>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcrCompareSpec {
    pub full_hidden: usize,
    pub scaled_hidden: usize,
    pub lr_osm_ctc: f64,
    pub lr_ctc: f64,
}

/// A fully resolved experiment description.
///
/// Defaults for `task = classification`: blobs (100 per class, 2 classes,
/// 2-D, spread 1), linear model, soft OSM, SGD lr 0.01 with momentum 0.9 and
/// weight decay 5e-4, batch 32, 300 epochs, cosine restarts every 100 epochs
/// with 5 warmup epochs, `alpha = 0.1`, `lambda = 1`, `lambda_min = 100`,
/// `lambda_max = 600`.
///
/// Defaults for `task = ocr`: synthetic sequences, MLP with 16 hidden units,
/// OSM-CTC, Adam lr 1e-3, batch 60, 300 epochs, `alpha = 1`. The schedule
/// defaults to cosine restarts for OSM-CTC and to exponential decay (0.97)
/// for plain CTC unless `train.schedule` is given.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub repeat: usize,
    pub out: PathBuf,
    pub data: DataSpec,
    pub model: ModelSpec,
    pub train: TrainConfig,
    /// `None` means "keyed by loss kind".
    pub schedule: Option<LrSchedule>,
    cosine: LrSchedule,
    exponential: LrSchedule,
    pub sweep: SweepSpec,
    pub compare: CompareSpec,
    pub ocr: OcrCompareSpec,
}

impl RunConfig {
    pub fn from_file(file: &ConfigFile) -> Result<Self> {
        let task: Task = file.parsed("run.task", Task::Classification, "`classification` or `ocr`")?;
        let ocr_task = task == Task::Ocr;
        let seed: u64 = file.parsed("run.seed", 0, "a non-negative integer")?;
        let repeat = file.count("run.repeat", 1)?;
        if repeat == 0 {
            return Err(Error::Config(format!("{}: must be >= 1", file.origin("run.repeat"))));
        }
        let out = PathBuf::from(file.get("run.out").unwrap_or("out"));

        let data = resolve_data(file, task)?;
        let model = resolve_model(file, task)?;

        let default_loss = if ocr_task { LossKind::OsmCtc } else { LossKind::SoftOsm };
        let loss: LossKind = file.parsed("train.loss", default_loss, "a loss kind")?;
        check_loss_for_task(file, "train.loss", loss, task)?;

        let epochs: u32 = file.parsed("train.epochs", 300, "a non-negative integer")?;
        let batch_size = file.count("train.batch_size", if ocr_task { 60 } else { 32 })?;
        if batch_size == 0 {
            return Err(Error::Config(format!("{}: must be >= 1", file.origin("train.batch_size"))));
        }

        let optimizer_name = file.get("train.optimizer").unwrap_or(if ocr_task { "adam" } else { "sgd" });
        let optimizer = match optimizer_name {
            "sgd" => {
                let d = SgdConfig::default();
                OptimizerConfig::Sgd(SgdConfig {
                    momentum: file.real("train.momentum", d.momentum)?,
                    weight_decay: file.real("train.weight_decay", d.weight_decay)?,
                    initial_lr: file.real("train.lr", d.initial_lr)?,
                })
            }
            "adam" => {
                let d = AdamConfig::default();
                OptimizerConfig::Adam(AdamConfig {
                    beta1: file.real("train.beta1", d.beta1)?,
                    beta2: file.real("train.beta2", d.beta2)?,
                    eps: file.real("train.eps", d.eps)?,
                    weight_decay: file.real("train.weight_decay", d.weight_decay)?,
                    initial_lr: file.real("train.lr", d.initial_lr)?,
                })
            }
            other => {
                return Err(Error::Config(format!(
                    "{}: expected `sgd` or `adam`, got {other:?}",
                    file.origin("train.optimizer")
                )))
            }
        };
        optimizer
            .validate()
            .map_err(|e| Error::Config(format!("[train] optimizer: {e}")))?;

        let cosine = match LrSchedule::cosine_default() {
            LrSchedule::CosineWarmRestart { period, warmup, min_lr } => LrSchedule::CosineWarmRestart {
                period: file.parsed("train.period", period, "a positive integer")?,
                warmup: file.parsed("train.warmup", warmup, "a non-negative integer")?,
                min_lr: file.real("train.min_lr", min_lr)?,
            },
            other => other,
        };
        let exponential = match LrSchedule::exponential_default() {
            LrSchedule::ExponentialDecay { rate } => LrSchedule::ExponentialDecay {
                rate: file.real("train.decay_rate", rate)?,
            },
            other => other,
        };
        let schedule = match file.get("train.schedule") {
            None => None,
            Some("cosine") => Some(cosine),
            Some("exponential") => Some(exponential),
            Some("constant") => Some(LrSchedule::constant()),
            Some(other) => {
                return Err(Error::Config(format!(
                    "{}: expected `cosine`, `exponential` or `constant`, got {other:?}",
                    file.origin("train.schedule")
                )))
            }
        };
        for s in [cosine, exponential] {
            s.validate()
                .map_err(|e| Error::Config(format!("[train] schedule: {e}")))?;
        }

        let base_hp = if ocr_task { HyperParams::ocr() } else { HyperParams::default() };
        let hp = HyperParams {
            alpha: file.real("train.alpha", base_hp.alpha)?,
            lambda: file.real("train.lambda", base_hp.lambda)?,
            lambda_min: file.real("train.lambda_min", base_hp.lambda_min)?,
            lambda_max: file.real("train.lambda_max", base_hp.lambda_max)?,
        };
        hp.validate().map_err(|e| Error::Config(format!("[train] {e}")))?;
        let hinge_margin = file.real("train.hinge_margin", LossSettings::default().hinge_margin)?;

        let mut run = Self {
            task,
            seed,
            repeat,
            out,
            data,
            model,
            train: TrainConfig {
                loss,
                epochs,
                batch_size,
                seed,
                optimizer,
                schedule: cosine,
                settings: LossSettings { hp, hinge_margin },
            },
            schedule,
            cosine,
            exponential,
            sweep: resolve_sweep(file)?,
            compare: CompareSpec {
                losses: Vec::new(),
                datasets: Vec::new(),
            },
            ocr: OcrCompareSpec {
                full_hidden: 0,
                scaled_hidden: 0,
                lr_osm_ctc: 0.0,
                lr_ctc: 0.0,
            },
        };
        run.train.schedule = run.schedule_for(loss);
        run.compare = resolve_compare(file, task, &run.data)?;
        run.ocr = resolve_ocr(file, model, optimizer.initial_lr())?;
        Ok(run)
    }

    /// Parse `path`, apply `overrides` (`section.key`, value), and resolve.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let mut file = ConfigFile::load(path)?;
        for (k, v) in overrides {
            file.set(k, v)?;
        }
        Self::from_file(&file)
    }

    /// Schedule used for `loss`: the explicit one if configured, otherwise
    /// exponential decay for plain CTC and cosine restarts for everything else.
    pub fn schedule_for(&self, loss: LossKind) -> LrSchedule {
        match self.schedule {
            Some(s) => s,
            None if loss == LossKind::Ctc => self.exponential,
            None => self.cosine,
        }
    }

    /// The configured training settings retargeted at another loss and seed.
    pub fn train_for(&self, loss: LossKind, seed: u64) -> TrainConfig {
        TrainConfig {
            loss,
            seed,
            schedule: self.schedule_for(loss),
            ..self.train
        }
    }

    /// Seeds used for repeated cells: `seed, seed + 1, ...`.
    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        let base = self.seed;
        (0..self.repeat as u64).map(move |i| base + i)
    }
}

fn check_loss_for_task(file: &ConfigFile, key: &str, loss: LossKind, task: Task) -> Result<()> {
    match (task, loss.is_sequence()) {
        (Task::Ocr, false) => Err(Error::Config(format!(
            "{}: {loss} is not a sequence loss; task = ocr needs osm-ctc or ctc",
            file.origin(key)
        ))),
        (Task::Classification, true) => Err(Error::Config(format!(
            "{}: {loss} is a sequence loss; set run.task = ocr",
            file.origin(key)
        ))),
        _ => Ok(()),
    }
}

fn parse_source(file: &ConfigFile, key: &str, token: &str) -> Result<DataSource> {
    let csv = |train: PathBuf, eval: Option<PathBuf>| -> Result<DataSource> {
        for (field, path) in [("data.train", Some(&train)), ("data.eval", eval.as_ref())] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(Error::Config(format!(
                        "{}: dataset file not found: {}",
                        file.origin(field),
                        p.display()
                    )));
                }
            }
        }
        Ok(DataSource::Csv { train, eval })
    };
    match token {
        "blobs" => Ok(DataSource::Blobs),
        "rings" => Ok(DataSource::Rings),
        "ocr" => Ok(DataSource::Ocr),
        "csv" => {
            let train = file.get("data.train").ok_or_else(|| {
                Error::Config(format!("{}: csv source needs `data.train`", file.origin(key)))
            })?;
            csv(PathBuf::from(train), file.get("data.eval").map(PathBuf::from))
        }
        other => match other.strip_prefix("csv:") {
            Some(path) if !path.is_empty() => {
                let p = PathBuf::from(path);
                if !p.is_file() {
                    return Err(Error::Config(format!(
                        "{}: dataset file not found: {path}",
                        file.origin(key)
                    )));
                }
                Ok(DataSource::Csv { train: p, eval: None })
            }
            _ => Err(Error::Config(format!(
                "{}: unknown dataset source {other:?} (expected blobs, rings, csv, csv:PATH or ocr)",
                file.origin(key)
            ))),
        },
    }
}

fn resolve_data(file: &ConfigFile, task: Task) -> Result<DataSpec> {
    let default_source = if task == Task::Ocr { "ocr" } else { "blobs" };
    let source = parse_source(file, "data.source", file.get("data.source").unwrap_or(default_source))?;
    match (&source, task) {
        (DataSource::Ocr, Task::Classification) => {
            return Err(Error::Config(format!(
                "{}: ocr data needs run.task = ocr",
                file.origin("data.source")
            )))
        }
        (DataSource::Blobs | DataSource::Rings | DataSource::Csv { .. }, Task::Ocr) => {
            return Err(Error::Config(format!(
                "{}: task = ocr needs data.source = ocr",
                file.origin("data.source")
            )))
        }
        _ => {}
    }
    let d = OcrGenConfig::default();
    let ocr = OcrGenConfig {
        count: file.count("data.count", d.count)?,
        alphabet: file.count("data.alphabet", d.alphabet)?,
        min_len: file.count("data.min_len", d.min_len)?,
        max_len: file.count("data.max_len", d.max_len)?,
        repeats: file.count("data.repeats", d.repeats)?,
        noise: file.real("data.noise", d.noise)?,
    };
    let spec = DataSpec {
        source,
        n_per_class: file.count("data.n_per_class", 100)?,
        classes: file.count("data.classes", 2)?,
        dim: file.count("data.dim", 2)?,
        spread: file.real("data.spread", 1.0)?,
        eval_seed_offset: file.parsed("data.eval_seed_offset", 1000, "a non-negative integer")?,
        ocr,
    };
    if spec.n_per_class == 0 {
        return Err(Error::Config(format!("{}: must be >= 1", file.origin("data.n_per_class"))));
    }
    if spec.classes < 2 {
        return Err(Error::Config(format!("{}: must be >= 2", file.origin("data.classes"))));
    }
    if spec.dim < 2 {
        return Err(Error::Config(format!("{}: must be >= 2", file.origin("data.dim"))));
    }
    if spec.spread < 0.0 {
        return Err(Error::Config(format!("{}: must be >= 0", file.origin("data.spread"))));
    }
    if task == Task::Ocr {
        let o = &spec.ocr;
        if o.count == 0 || o.alphabet < 2 || o.repeats == 0 || o.min_len == 0 || o.min_len > o.max_len || o.noise < 0.0 {
            return Err(Error::Config(
                "[data] ocr generator needs count >= 1, alphabet >= 2, repeats >= 1, 1 <= min_len <= max_len, noise >= 0"
                    .into(),
            ));
        }
    }
    Ok(spec)
}

fn resolve_model(file: &ConfigFile, task: Task) -> Result<ModelSpec> {
    let default_hidden = if task == Task::Ocr { 16 } else { 32 };
    let hidden = file.count("model.hidden", default_hidden)?;
    let kind = file.get("model.kind").unwrap_or(if task == Task::Ocr { "mlp" } else { "linear" });
    match kind {
        "linear" => Ok(ModelSpec::Linear),
        "mlp" if hidden == 0 => Err(Error::Config(format!("{}: must be >= 1", file.origin("model.hidden")))),
        "mlp" => Ok(ModelSpec::Mlp { hidden }),
        other => Err(Error::Config(format!(
            "{}: expected `linear` or `mlp`, got {other:?}",
            file.origin("model.kind")
        ))),
    }
}

fn resolve_sweep(file: &ConfigFile) -> Result<SweepSpec> {
    let margins = file
        .list("sweep.margins")
        .unwrap_or_default()
        .into_iter()
        .map(|item| {
            item.split_once(':')
                .and_then(|(a, b)| Some((a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?)))
                .filter(|(a, b)| a.is_finite() && b.is_finite())
                .ok_or_else(|| {
                    Error::Config(format!(
                        "{}: {item:?} is not a `lambda_max:lambda_min` pair",
                        file.origin("sweep.margins")
                    ))
                })
        })
        .collect::<Result<_>>()?;
    Ok(SweepSpec {
        alpha: file.real_list("sweep.alpha")?,
        lambda: file.real_list("sweep.lambda")?,
        margins,
    })
}

fn resolve_compare(file: &ConfigFile, task: Task, data: &DataSpec) -> Result<CompareSpec> {
    let losses = match file.list("compare.losses") {
        None if task == Task::Ocr => vec![LossKind::OsmCtc, LossKind::Ctc],
        None => vec![LossKind::SoftOsm, LossKind::Ce, LossKind::Hinge],
        Some(items) => items
            .into_iter()
            .map(|s| {
                let loss: LossKind = s
                    .parse()
                    .map_err(|_| Error::Config(format!("{}: unknown loss {s:?}", file.origin("compare.losses"))))?;
                check_loss_for_task(file, "compare.losses", loss, task)?;
                Ok(loss)
            })
            .collect::<Result<_>>()?,
    };
    if losses.is_empty() {
        return Err(Error::Config(format!("{}: empty list", file.origin("compare.losses"))));
    }
    let datasets = match file.list("compare.datasets") {
        None => vec![data.source.clone()],
        Some(items) => items
            .into_iter()
            .map(|s| parse_source(file, "compare.datasets", s))
            .collect::<Result<_>>()?,
    };
    if datasets.is_empty() {
        return Err(Error::Config(format!("{}: empty list", file.origin("compare.datasets"))));
    }
    Ok(CompareSpec { losses, datasets })
}

fn resolve_ocr(file: &ConfigFile, model: ModelSpec, lr: f64) -> Result<OcrCompareSpec> {
    let model_hidden = match model {
        ModelSpec::Mlp { hidden } => hidden,
        ModelSpec::Linear => 16,
    };
    let full_hidden = file.count("ocr.full_hidden", model_hidden)?;
    let scaled_hidden = file.count("ocr.scaled_hidden", (full_hidden / 2).max(1))?;
    if full_hidden == 0 || scaled_hidden == 0 {
        return Err(Error::Config("[ocr] hidden widths must be >= 1".into()));
    }
    let spec = OcrCompareSpec {
        full_hidden,
        scaled_hidden,
        lr_osm_ctc: file.real("ocr.lr_osm_ctc", lr)?,
        lr_ctc: file.real("ocr.lr_ctc", lr)?,
    };
    if spec.lr_osm_ctc <= 0.0 || spec.lr_ctc <= 0.0 {
        return Err(Error::Config("[ocr] learning rates must be > 0".into()));
    }
    Ok(spec)
}
