//! Finite-difference gradient suites.
//!
//! Every suite compares an analytic gradient against central differences with
//! step [`STEP`]. The error of one component is
//! `|analytic - numeric| / max(1, |analytic|, |numeric|)`: relative for
//! components of magnitude above one, absolute below, which keeps the metric
//! meaningful for gradients that saturate at zero. A suite reports the maximum
//! over all components of all instances.

use std::fmt;

use rand::Rng as _;

use crate::ctc;
use crate::losses::{self, HyperParams, LossKind, LossSettings};
use crate::models::{Model, ModelConfig};
use crate::rng::{self, Rng};
use crate::train;

pub const STEP: f64 = 1e-4;
pub const LOSS_THRESHOLD: f64 = 1e-6;
pub const CTC_THRESHOLD: f64 = 1e-5;

/// Standard deviation of random scores fed to the loss suites.
pub const SCORE_STD: f64 = 300.0;

pub fn component_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Max component error between an analytic gradient and central differences
/// of `f` around `x`.
pub fn check_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> f64 {
    assert_eq!(x.len(), analytic.len(), "gradient length");
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + STEP;
        let up = f(&probe);
        probe[i] = x[i] - STEP;
        let down = f(&probe);
        probe[i] = x[i];
        worst = worst.max(component_error(analytic[i], (up - down) / (2.0 * STEP)));
    }
    worst
}

/// One instance check: draws a random case and returns its max error, or
/// `None` when the draw lands too close to a kink to be meaningful.
pub type InstanceCheck = fn(&mut Rng) -> Option<f64>;

#[derive(Clone, Copy)]
pub struct GradSuite {
    pub name: &'static str,
    pub threshold: f64,
    pub check: InstanceCheck,
}

impl fmt::Debug for GradSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GradSuite")
            .field("name", &self.name)
            .field("threshold", &self.threshold)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub instances: usize,
    pub skipped: usize,
    pub max_error: f64,
    pub threshold: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.max_error <= self.threshold
    }
}

/// Runs `count` accepted instances of `suite` (kink-adjacent draws are
/// redrawn, up to `4 * count` extra attempts).
pub fn run_suite(suite: &GradSuite, seed: u64, count: usize) -> SuiteResult {
    let mut r = rng::seeded(seed);
    let mut instances = 0;
    let mut skipped = 0;
    let mut max_error: f64 = 0.0;
    while instances < count && skipped <= 4 * count {
        match (suite.check)(&mut r) {
            Some(err) => {
                instances += 1;
                // NaN must fail the suite
                max_error = if err.is_nan() { f64::INFINITY } else { max_error.max(err) };
            }
            None => skipped += 1,
        }
    }
    if instances < count {
        max_error = f64::INFINITY;
    }
    SuiteResult {
        name: suite.name,
        instances,
        skipped,
        max_error,
        threshold: suite.threshold,
    }
}

pub fn default_suites() -> Vec<GradSuite> {
    vec![
        GradSuite {
            name: "soft-osm",
            threshold: LOSS_THRESHOLD,
            check: soft_osm_instance,
        },
        GradSuite {
            name: "cross-entropy",
            threshold: LOSS_THRESHOLD,
            check: cross_entropy_instance,
        },
        GradSuite {
            name: "binary-cross-entropy",
            threshold: LOSS_THRESHOLD,
            check: binary_ce_instance,
        },
        GradSuite {
            name: "hinge",
            threshold: LOSS_THRESHOLD,
            check: hinge_instance,
        },
        GradSuite {
            name: "osm-log-probs",
            threshold: LOSS_THRESHOLD,
            check: osm_log_probs_instance,
        },
        GradSuite {
            name: "model-soft-osm",
            threshold: LOSS_THRESHOLD,
            check: model_soft_osm_instance,
        },
        GradSuite {
            name: "model-ce",
            threshold: LOSS_THRESHOLD,
            check: model_ce_instance,
        },
        GradSuite {
            name: "model-hinge",
            threshold: LOSS_THRESHOLD,
            check: model_hinge_instance,
        },
        GradSuite {
            name: "ctc",
            threshold: CTC_THRESHOLD,
            check: ctc_instance,
        },
        GradSuite {
            name: "osm-ctc-model",
            threshold: CTC_THRESHOLD,
            check: osm_ctc_model_instance,
        },
    ]
}

fn random_scores(r: &mut Rng) -> (Vec<f64>, usize) {
    let classes = r.random_range(2..=10);
    let s = (0..classes).map(|_| rng::gaussian(r, SCORE_STD)).collect();
    (s, r.random_range(0..classes))
}

fn soft_osm_instance(r: &mut Rng) -> Option<f64> {
    let hp = HyperParams::default();
    let (s, y) = random_scores(r);
    let analytic = losses::soft_osm_grad(&s, y, &hp).ok()?;
    Some(check_gradient(|x| losses::soft_osm(x, y, &hp).unwrap(), &s, &analytic))
}

fn cross_entropy_instance(r: &mut Rng) -> Option<f64> {
    let (s, y) = random_scores(r);
    let (_, analytic) = losses::cross_entropy(&s, y).ok()?;
    Some(check_gradient(|x| losses::cross_entropy(x, y).unwrap().0, &s, &analytic))
}

fn binary_ce_instance(r: &mut Rng) -> Option<f64> {
    // a unit-scale draw as well, where the logistic curve actually bends
    let s = if r.random_bool(0.5) {
        rng::gaussian(r, SCORE_STD)
    } else {
        rng::gaussian(r, 3.0)
    };
    let y = u8::from(r.random_bool(0.5));
    let (_, analytic) = losses::binary_cross_entropy(s, y);
    Some(check_gradient(|x| losses::binary_cross_entropy(x[0], y).0, &[s], &[analytic]))
}

fn hinge_instance(r: &mut Rng) -> Option<f64> {
    let (mut s, y) = random_scores(r);
    // hinge margins are unit-scale: shrink scores so both sides of the kink occur
    s.iter_mut().for_each(|v| *v /= SCORE_STD);
    let margin = 1.0;
    let near_kink = s
        .iter()
        .enumerate()
        .any(|(j, &sj)| j != y && (margin + sj - s[y]).abs() < 10.0 * STEP);
    if near_kink {
        return None;
    }
    let (_, analytic) = losses::hinge_multiclass(&s, y, margin).ok()?;
    Some(check_gradient(|x| losses::hinge_multiclass(x, y, margin).unwrap().0, &s, &analytic))
}

fn osm_log_probs_instance(r: &mut Rng) -> Option<f64> {
    let hp = HyperParams::default();
    let (s, _) = random_scores(r);
    let upstream: Vec<f64> = (0..=s.len()).map(|_| r.random_range(-1.0..1.0)).collect();
    let analytic = losses::osm_log_probs_backward(&s, &hp, &upstream).ok()?;
    let f = |x: &[f64]| -> f64 {
        losses::osm_log_probs(x, &hp)
            .iter()
            .zip(&upstream)
            .map(|(a, b)| a * b)
            .sum()
    };
    Some(check_gradient(f, &s, &analytic))
}

fn random_model(r: &mut Rng, inputs: usize, outputs: usize) -> Model {
    let config = if r.random_bool(0.5) {
        ModelConfig::Linear { inputs, outputs }
    } else {
        ModelConfig::Mlp {
            inputs,
            hidden: r.random_range(2..=8),
            outputs,
        }
    };
    let mut model = Model::init(config, r.random()).expect("valid dims");
    // non-zero biases so every parameter block is exercised
    model
        .params_mut()
        .iter_mut()
        .for_each(|p| *p += r.random_range(-0.5..0.5));
    model
}

/// True when a finite-difference probe on any parameter could flip a ReLU.
fn near_relu_kink(model: &Model, inputs: &[Vec<f64>]) -> bool {
    inputs.iter().any(|x| {
        let scale = 1.0 + x.iter().map(|v| v.abs()).sum::<f64>();
        model
            .hidden_pre_activations(x)
            .ok()
            .flatten()
            .is_some_and(|pre| pre.iter().any(|p| p.abs() < 100.0 * STEP * scale))
    })
}

/// Output-layer parameter range of `model`.
fn output_block(model: &Model) -> std::ops::Range<usize> {
    let n = model.params().len();
    match model.config() {
        ModelConfig::Linear { .. } => 0..n,
        ModelConfig::Mlp { inputs, hidden, .. } => hidden * inputs + hidden..n,
    }
}

/// Multiplies the output weights by `scale` and adds a per-class bias drawn
/// from `offsets`. Large scores come from the biases rather than from steep
/// weights: a steep weight lets one finite-difference step cross a whole
/// softplus bend, and the probe then measures its own truncation error.
fn spread_outputs(r: &mut Rng, model: &mut Model, scale: f64, offsets: Option<(f64, f64)>) {
    let block = output_block(model);
    let outputs = model.config().outputs();
    let n = model.params().len();
    model.params_mut()[block].iter_mut().for_each(|p| *p *= scale);
    if let Some((lo, hi)) = offsets {
        for b in &mut model.params_mut()[n - outputs..] {
            *b += r.random_range(lo..hi);
        }
    }
}

fn model_loss_instance(r: &mut Rng, loss: LossKind, scale: f64, offsets: Option<(f64, f64)>) -> Option<f64> {
    let inputs = r.random_range(1..=4);
    let classes = r.random_range(2..=6);
    let mut model = random_model(r, inputs, classes);
    spread_outputs(r, &mut model, scale, offsets);
    let x: Vec<f64> = (0..inputs).map(|_| rng::gaussian(r, 1.0)).collect();
    let y = r.random_range(0..classes);
    if near_relu_kink(&model, std::slice::from_ref(&x)) {
        return None;
    }
    let settings = LossSettings::default();
    let scores = model.forward(&x).ok()?;
    if loss == LossKind::Hinge
        && scores
            .iter()
            .enumerate()
            .any(|(j, &sj)| j != y && (1.0 + sj - scores[y]).abs() < 1e-2)
    {
        return None;
    }
    let (_, d_scores) = losses::classification_loss(loss, &scores, y, &settings).ok()?;
    let analytic = model.backward(&x, &d_scores).ok()?.params;
    let config = model.config();
    let f = |p: &[f64]| -> f64 {
        let m = Model::from_params(config, p.to_vec()).unwrap();
        let s = m.forward(&x).unwrap();
        losses::classification_loss(loss, &s, y, &settings).unwrap().0
    };
    Some(check_gradient(f, model.params(), &analytic))
}

fn model_soft_osm_instance(r: &mut Rng) -> Option<f64> {
    model_loss_instance(r, LossKind::SoftOsm, 4.0, Some((-200.0, 800.0)))
}

fn model_ce_instance(r: &mut Rng) -> Option<f64> {
    model_loss_instance(r, LossKind::Ce, 3.0, None)
}

fn model_hinge_instance(r: &mut Rng) -> Option<f64> {
    model_loss_instance(r, LossKind::Hinge, 1.0, None)
}

fn random_target(r: &mut Rng, frames: usize, symbols: usize) -> Vec<usize> {
    loop {
        let len = r.random_range(0..=frames.div_ceil(2));
        let target: Vec<usize> = (0..len).map(|_| r.random_range(0..symbols)).collect();
        if ctc::required_frames(&target) <= frames {
            return target;
        }
    }
}

fn ctc_instance(r: &mut Rng) -> Option<f64> {
    let frames = r.random_range(1..=8);
    let symbols = r.random_range(1..=4);
    let log_probs: Vec<Vec<f64>> = (0..frames)
        .map(|_| {
            let logits: Vec<f64> = (0..=symbols).map(|_| r.random_range(-4.0..4.0)).collect();
            losses::log_softmax(&logits)
        })
        .collect();
    let target = random_target(r, frames, symbols);
    let out = ctc::ctc_loss(&log_probs, &target).ok()?;
    let flat: Vec<f64> = log_probs.concat();
    let analytic: Vec<f64> = out.grad.concat();
    let width = symbols + 1;
    let f = |p: &[f64]| -> f64 {
        let rows: Vec<Vec<f64>> = p.chunks(width).map(<[f64]>::to_vec).collect();
        ctc::ctc_loss(&rows, &target).unwrap().loss
    };
    Some(check_gradient(f, &flat, &analytic))
}

fn osm_ctc_model_instance(r: &mut Rng) -> Option<f64> {
    let hp = HyperParams::ocr();
    let symbols = r.random_range(2..=3);
    let inputs = r.random_range(1..=3);
    let frames = r.random_range(2..=5);
    let mut model = random_model(r, inputs, symbols);
    // straddle the margin planes so both class and blank mass move
    spread_outputs(r, &mut model, 4.0, Some((0.0, 700.0)));
    let n = model.params().len();
    let xs: Vec<Vec<f64>> = (0..frames)
        .map(|_| (0..inputs).map(|_| rng::gaussian(r, 1.0)).collect())
        .collect();
    if near_relu_kink(&model, &xs) {
        return None;
    }
    let target = random_target(r, frames, symbols);
    let mut analytic = vec![0.0; n];
    train::sequence_loss_and_grad(&model, &xs, &target, LossKind::OsmCtc, &hp, &mut analytic).ok()?;
    let config = model.config();
    let f = |p: &[f64]| -> f64 {
        let m = Model::from_params(config, p.to_vec()).unwrap();
        let mut sink = vec![0.0; p.len()];
        train::sequence_loss_and_grad(&m, &xs, &target, LossKind::OsmCtc, &hp, &mut sink).unwrap()
    };
    Some(check_gradient(f, model.params(), &analytic))
}
