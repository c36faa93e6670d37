//! Mini-batch training loops, metrics and margin statistics.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::ctc;
use crate::data::{LabeledDataset, SequenceDataset};
use crate::error::{Error, Result};
use crate::losses::{self, HyperParams, LossKind, LossSettings};
use crate::models::Model;
use crate::optim::{AdamConfig, LrSchedule, Optimizer, OptimizerConfig, SgdConfig};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: u32,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub schedule: LrSchedule,
    pub settings: LossSettings,
}

impl TrainConfig {
    /// Image-classification defaults: SGD + momentum, cosine restarts every
    /// 100 epochs, batch 32, 300 epochs.
    pub fn classification(loss: LossKind) -> Self {
        Self {
            loss,
            epochs: 300,
            batch_size: 32,
            seed: 0,
            optimizer: OptimizerConfig::Sgd(SgdConfig::default()),
            schedule: LrSchedule::cosine_default(),
            settings: LossSettings::default(),
        }
    }

    /// Sequence-recognition defaults: Adam at 1e-3, batch 60, 300 epochs,
    /// `alpha = 1`. OSM-CTC keeps the cosine schedule; plain CTC decays
    /// exponentially.
    pub fn ocr(loss: LossKind) -> Self {
        let schedule = if loss == LossKind::Ctc {
            LrSchedule::exponential_default()
        } else {
            LrSchedule::cosine_default()
        };
        Self {
            loss,
            epochs: 300,
            batch_size: 60,
            seed: 0,
            optimizer: OptimizerConfig::Adam(AdamConfig::default()),
            schedule,
            settings: LossSettings {
                hp: HyperParams::ocr(),
                hinge_margin: 1.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        self.optimizer.validate()?;
        self.schedule.validate()?;
        self.settings.hp.validate()
    }

    pub fn lr_at(&self, epoch: u32) -> f64 {
        self.schedule.lr_at(self.optimizer.initial_lr(), epoch)
    }
}

/// One row of a training report. `epoch` is the 0-based index passed to the
/// schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: u32,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub eval_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub loss: LossKind,
    pub records: Vec<EpochRecord>,
    pub model: Model,
    /// Wall-clock seconds per epoch; kept out of the CSV so reports stay
    /// byte-identical across reruns.
    pub epoch_seconds: Vec<f64>,
}

impl TrainReport {
    pub fn final_eval_accuracy(&self) -> Option<f64> {
        self.records.last().map(|r| r.eval_accuracy)
    }

    pub fn final_train_accuracy(&self) -> Option<f64> {
        self.records.last().map(|r| r.train_accuracy)
    }

    /// First epoch whose eval accuracy reaches `target`.
    pub fn epochs_to_accuracy(&self, target: f64) -> Option<u32> {
        self.records.iter().find(|r| r.eval_accuracy >= target).map(|r| r.epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("# epoch,lr,train_loss,train_accuracy,eval_accuracy\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.lr, r.train_loss, r.train_accuracy, r.eval_accuracy
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "loss_kind = {}", self.loss);
        let _ = writeln!(out, "epochs = {}", self.records.len());
        if let Some(last) = self.records.last() {
            let _ = writeln!(out, "final_train_loss = {}", last.train_loss);
            let _ = writeln!(out, "final_train_accuracy = {}", last.train_accuracy);
            let _ = writeln!(out, "final_eval_accuracy = {}", last.eval_accuracy);
            let best = self
                .records
                .iter()
                .map(|r| r.eval_accuracy)
                .fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(out, "best_eval_accuracy = {best}");
        }
        let total: f64 = self.epoch_seconds.iter().sum();
        let _ = writeln!(out, "wall_clock_seconds = {total:.3}");
        out
    }
}

/// Fraction of predictions equal to the truth.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "accuracy",
            expected: truth.len(),
            got: predictions.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set is undefined".into()));
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

pub fn predict_classes(model: &Model, dataset: &LabeledDataset, loss: LossKind) -> Result<Vec<usize>> {
    dataset
        .features
        .iter()
        .map(|x| Ok(losses::predict(loss, &model.forward(x)?)))
        .collect()
}

pub fn classifier_accuracy(model: &Model, dataset: &LabeledDataset, loss: LossKind) -> Result<f64> {
    accuracy(&predict_classes(model, dataset, loss)?, &dataset.labels)
}

fn check_model(model: &Model, inputs: usize, outputs: usize) -> Result<()> {
    let cfg = model.config();
    crate::error::check_len("model inputs", inputs, cfg.inputs())?;
    crate::error::check_len("model outputs", outputs, cfg.outputs())
}

fn epoch_order(len: usize, seed: u64, epoch: u32) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut r = rng::seeded(seed.wrapping_add(u64::from(epoch)));
    order.shuffle(&mut r);
    order
}

/// Shared epoch/batch loop. `example` returns the loss of one training example
/// and adds its parameter gradient into the accumulator.
fn run_epochs(
    config: &TrainConfig,
    mut model: Model,
    len: usize,
    mut example: impl FnMut(&Model, usize, &mut [f64]) -> Result<f64>,
    mut evaluate: impl FnMut(&Model) -> Result<(f64, f64)>,
) -> Result<TrainReport> {
    config.validate()?;
    let mut optimizer = Optimizer::new(config.optimizer, model.params().len());
    let mut records = Vec::with_capacity(config.epochs as usize);
    let mut epoch_seconds = Vec::with_capacity(config.epochs as usize);
    let mut grads = vec![0.0; model.params().len()];
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = config.lr_at(epoch);
        let order = epoch_order(len, config.seed, epoch);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                loss_sum += example(&model, i, &mut grads)?;
            }
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| *g *= scale);
            optimizer.step(model.params_mut(), &grads, lr)?;
        }
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "training diverged at epoch {epoch} (non-finite parameters)"
            )));
        }
        let (train_accuracy, eval_accuracy) = evaluate(&model)?;
        records.push(EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / len as f64,
            train_accuracy,
            eval_accuracy,
        });
        epoch_seconds.push(started.elapsed().as_secs_f64());
    }
    Ok(TrainReport {
        loss: config.loss,
        records,
        model,
        epoch_seconds,
    })
}

/// Train `model` on a classification task. Per-batch gradients are means over
/// the batch; the shuffle of epoch `e` is seeded with `seed + e`.
pub fn train_classifier(
    config: &TrainConfig,
    model: Model,
    train: &LabeledDataset,
    eval: &LabeledDataset,
) -> Result<TrainReport> {
    if config.loss.is_sequence() {
        return Err(Error::InvalidArgument(format!(
            "{} is not a classification loss",
            config.loss
        )));
    }
    if config.loss == LossKind::BinaryCe && train.class_count != 2 {
        return Err(Error::InvalidArgument(format!(
            "binary loss needs exactly 2 classes, dataset has {}",
            train.class_count
        )));
    }
    if train.dim() != eval.dim() {
        return Err(Error::DimensionMismatch {
            context: "eval feature width",
            expected: train.dim(),
            got: eval.dim(),
        });
    }
    check_model(&model, train.dim(), config.loss.output_dim(train.class_count))?;
    let settings = config.settings;
    let loss = config.loss;
    run_epochs(
        config,
        model,
        train.len(),
        |model, i, grads| {
            let x = &train.features[i];
            let scores = model.forward(x)?;
            let (value, d_scores) = losses::classification_loss(loss, &scores, train.labels[i], &settings)?;
            let g = model.backward(x, &d_scores)?;
            grads.iter_mut().zip(&g.params).for_each(|(a, b)| *a += b);
            Ok(value)
        },
        |model| {
            Ok((
                classifier_accuracy(model, train, loss)?,
                classifier_accuracy(model, eval, loss)?,
            ))
        },
    )
}

/// Frame log-probabilities paired with the raw frame scores.
type FrameOutputs = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Per-frame log-probabilities for a sequence under `loss`, along with the
/// raw frame scores needed for the backward pass.
pub fn frame_log_probs(
    model: &Model,
    frames: &[Vec<f64>],
    loss: LossKind,
    hp: &HyperParams,
) -> Result<FrameOutputs> {
    let scores: Vec<Vec<f64>> = frames.iter().map(|f| model.forward(f)).collect::<Result<_>>()?;
    let log_probs = match loss {
        LossKind::OsmCtc => ctc::osm_frame_log_probs(&scores, hp),
        LossKind::Ctc => scores.iter().map(|s| losses::log_softmax(s)).collect(),
        other => {
            return Err(Error::InvalidArgument(format!("{other} is not a sequence loss")));
        }
    };
    Ok((scores, log_probs))
}

/// CTC loss of one sequence and its gradient with respect to model parameters
/// (added into `grads`).
pub fn sequence_loss_and_grad(
    model: &Model,
    frames: &[Vec<f64>],
    target: &[usize],
    loss: LossKind,
    hp: &HyperParams,
    grads: &mut [f64],
) -> Result<f64> {
    let (scores, log_probs) = frame_log_probs(model, frames, loss, hp)?;
    let out = ctc::ctc_loss(&log_probs, target)?;
    for t in 0..frames.len() {
        let d_scores = match loss {
            LossKind::OsmCtc => losses::osm_log_probs_backward(&scores[t], hp, &out.grad[t])?,
            _ => losses::log_softmax_backward(&log_probs[t], &out.grad[t]),
        };
        let g = model.backward(&frames[t], &d_scores)?;
        grads.iter_mut().zip(&g.params).for_each(|(a, b)| *a += b);
    }
    Ok(out.loss)
}

pub fn decode_sequences(
    model: &Model,
    dataset: &SequenceDataset,
    loss: LossKind,
    hp: &HyperParams,
) -> Result<Vec<Vec<usize>>> {
    dataset
        .examples
        .iter()
        .map(|ex| Ok(ctc::greedy_decode(&frame_log_probs(model, &ex.features, loss, hp)?.1)))
        .collect()
}

pub fn sequence_accuracy(model: &Model, dataset: &SequenceDataset, loss: LossKind, hp: &HyperParams) -> Result<f64> {
    let predictions = decode_sequences(model, dataset, loss, hp)?;
    let targets: Vec<Vec<usize>> = dataset.examples.iter().map(|e| e.target.clone()).collect();
    ctc::ocr_accuracy(&predictions, &targets)
}

/// Train a frame-wise model with CTC. For `osm-ctc` the model emits `K` OSM
/// scores per frame and the rejection class is the blank; for `ctc` it emits
/// `K + 1` logits fed through a log-softmax.
pub fn train_ctc(
    config: &TrainConfig,
    model: Model,
    train: &SequenceDataset,
    eval: &SequenceDataset,
) -> Result<TrainReport> {
    if !config.loss.is_sequence() {
        return Err(Error::InvalidArgument(format!("{} is not a sequence loss", config.loss)));
    }
    let infeasible: Vec<usize> = train
        .examples
        .iter()
        .enumerate()
        .filter(|(_, ex)| ctc::check_feasible(ex.features.len(), &ex.target).is_err())
        .map(|(i, _)| i)
        .collect();
    if !infeasible.is_empty() {
        return Err(Error::InfeasibleExamples(infeasible));
    }
    if train.dim() != eval.dim() || train.symbols() != eval.symbols() {
        return Err(Error::InvalidArgument(
            "train and eval sequence sets disagree on frame width or alphabet".into(),
        ));
    }
    check_model(&model, train.dim(), config.loss.output_dim(train.symbols()))?;
    let hp = config.settings.hp;
    let loss = config.loss;
    run_epochs(
        config,
        model,
        train.len(),
        |model, i, grads| {
            let ex = &train.examples[i];
            sequence_loss_and_grad(model, &ex.features, &ex.target, loss, &hp, grads)
        },
        |model| {
            Ok((
                sequence_accuracy(model, train, loss, &hp)?,
                sequence_accuracy(model, eval, loss, &hp)?,
            ))
        },
    )
}

/// Quantiles at 5, 25, 50, 75 and 95 percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantiles {
    pub p05: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

impl Quantiles {
    /// Linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let pos = q * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        };
        Some(Self {
            p05: at(0.05),
            p25: at(0.25),
            p50: at(0.50),
            p75: at(0.75),
            p95: at(0.95),
        })
    }
}

/// Where trained scores sit relative to the margin planes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginStats {
    pub true_class: Quantiles,
    /// `None` for single-output models.
    pub off_class: Option<Quantiles>,
    /// Fraction of true-class scores inside `[0, lambda_min]`.
    pub true_in_band: f64,
    /// Fraction of off-class scores at or beyond `lambda_max`.
    pub off_beyond_outer: f64,
}

pub fn margin_stats(model: &Model, dataset: &LabeledDataset, hp: &HyperParams) -> Result<MarginStats> {
    let mut true_scores = Vec::with_capacity(dataset.len());
    let mut off_scores = Vec::new();
    for (x, &y) in dataset.features.iter().zip(&dataset.labels) {
        let s = model.forward(x)?;
        crate::error::check_label(y, s.len())?;
        for (j, &v) in s.iter().enumerate() {
            if j == y {
                true_scores.push(v);
            } else {
                off_scores.push(v);
            }
        }
    }
    let frac = |v: &[f64], f: &dyn Fn(f64) -> bool| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().filter(|&&x| f(x)).count() as f64 / v.len() as f64
        }
    };
    Ok(MarginStats {
        true_class: Quantiles::of(&true_scores).expect("dataset is non-empty"),
        off_class: Quantiles::of(&off_scores),
        true_in_band: frac(&true_scores, &|v| (0.0..=hp.lambda_min).contains(&v)),
        off_beyond_outer: frac(&off_scores, &|v| v >= hp.lambda_max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_blobs, gen_ocr_sequences, OcrGenConfig};
    use crate::models::ModelConfig;

    fn linear(inputs: usize, outputs: usize, seed: u64) -> Model {
        Model::init(ModelConfig::Linear { inputs, outputs }, seed).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 1, 2], &[0, 1, 2, 2]).unwrap(), 0.75);
        assert_eq!(accuracy(&[1, 1], &[1, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let d = gen_blobs(10, 2, 2, 1.0, 1).unwrap();
        let mut cfg = TrainConfig::classification(LossKind::SoftOsm);
        cfg.epochs = 0;
        let init = linear(2, 2, 3);
        let report = train_classifier(&cfg, init.clone(), &d, &d).unwrap();
        assert!(report.records.is_empty());
        assert_eq!(report.model, init);
    }

    #[test]
    fn training_is_deterministic_and_traces_schedule() {
        let d = gen_blobs(20, 3, 2, 1.0, 2).unwrap();
        let mut cfg = TrainConfig::classification(LossKind::Ce);
        cfg.epochs = 12;
        cfg.seed = 5;
        let a = train_classifier(&cfg, linear(2, 3, 1), &d, &d).unwrap();
        let b = train_classifier(&cfg, linear(2, 3, 1), &d, &d).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.model, b.model);
        assert_eq!(a.to_csv(), b.to_csv());
        for r in &a.records {
            assert_eq!(r.lr, cfg.schedule.lr_at(0.01, r.epoch));
        }
    }

    #[test]
    fn binary_loss_requires_two_classes() {
        let d = gen_blobs(5, 3, 2, 1.0, 1).unwrap();
        let cfg = TrainConfig::classification(LossKind::BinaryCe);
        let err = train_classifier(&cfg, linear(2, 1, 1), &d, &d).unwrap_err();
        assert!(err.to_string().contains("2 classes"));
    }

    #[test]
    fn model_shape_is_checked() {
        let d = gen_blobs(5, 3, 2, 1.0, 1).unwrap();
        let cfg = TrainConfig::classification(LossKind::SoftOsm);
        assert!(train_classifier(&cfg, linear(2, 2, 1), &d, &d).is_err());
        assert!(train_classifier(&cfg, linear(3, 3, 1), &d, &d).is_err());
    }

    #[test]
    fn sequence_loss_rejected_by_classifier() {
        let d = gen_blobs(5, 2, 2, 1.0, 1).unwrap();
        let cfg = TrainConfig::classification(LossKind::Ctc);
        assert!(train_classifier(&cfg, linear(2, 3, 1), &d, &d).is_err());
    }

    #[test]
    fn infeasible_sequences_are_reported_by_index() {
        let cfg_gen = OcrGenConfig {
            count: 4,
            ..OcrGenConfig::default()
        };
        let mut d = gen_ocr_sequences(&cfg_gen, 1).unwrap();
        d.examples[2].features.truncate(1);
        d.examples[2].target = vec![0, 0];
        let cfg = TrainConfig::ocr(LossKind::OsmCtc);
        let err = train_ctc(&cfg, linear(4, 4, 1), &d, &d).unwrap_err();
        assert!(matches!(err, Error::InfeasibleExamples(ref v) if v == &vec![2]));
    }

    #[test]
    fn ocr_scheduler_keyed_by_loss() {
        assert!(matches!(
            TrainConfig::ocr(LossKind::Ctc).schedule,
            LrSchedule::ExponentialDecay { .. }
        ));
        assert!(matches!(
            TrainConfig::ocr(LossKind::OsmCtc).schedule,
            LrSchedule::CosineWarmRestart { .. }
        ));
        assert_eq!(TrainConfig::ocr(LossKind::OsmCtc).settings.hp.alpha, 1.0);
        assert_eq!(TrainConfig::ocr(LossKind::OsmCtc).batch_size, 60);
    }

    #[test]
    fn quantiles_interpolate() {
        let q = Quantiles::of(&[4.0, 0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(q.p50, 2.0);
        assert_eq!(q.p25, 1.0);
        assert!((q.p05 - 0.2).abs() < 1e-12);
        assert!(Quantiles::of(&[]).is_none());
    }

    #[test]
    fn margin_stats_on_ideal_scores() {
        // class 0 points at x=+1, class 1 at x=-1; s_0 = -250 x + 300, s_1 = 250 x + 300
        let model = Model::linear(&[-250.0, 250.0], &[300.0, 300.0]).unwrap();
        let d = LabeledDataset::new(vec![vec![1.0], vec![-1.0], vec![1.0]], vec![0, 1, 0], 2).unwrap();
        let stats = margin_stats(&model, &d, &HyperParams::default()).unwrap();
        assert_eq!(stats.true_class.p50, 50.0);
        assert_eq!(stats.off_class.unwrap().p50, 550.0);
        assert_eq!(stats.true_in_band, 1.0);
        assert_eq!(stats.off_beyond_outer, 0.0);
    }

    #[test]
    fn untrained_scores_near_init_scale() {
        let d = gen_blobs(50, 2, 2, 1.0, 4).unwrap();
        let stats = margin_stats(&linear(2, 2, 9), &d, &HyperParams::default()).unwrap();
        // weights ~ N(0, 1), inputs of norm ~10
        assert!(stats.true_class.p50.abs() < 40.0);
        assert!(stats.off_class.unwrap().p95.abs() < 60.0);
    }
}
