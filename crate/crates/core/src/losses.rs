//! Loss functions over per-class score vectors.
//!
//! All functions take raw scores (`&[f64]`, one entry per class) and a class
//! index. OSM losses treat a *low* score as "belongs to this class"; hinge and
//! cross-entropy use the usual high-score convention.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_label, Error, Result};

/// OSM hyperparameters.
///
/// `lambda_min` and `lambda_max` are the inner and outer margin planes;
/// `lambda` weights the negative-class terms and `alpha` the penalty that keeps
/// the true-class score non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub alpha: f64,
    pub lambda: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            lambda: 1.0,
            lambda_min: 100.0,
            lambda_max: 600.0,
        }
    }
}

impl HyperParams {
    pub fn new(alpha: f64, lambda: f64, lambda_min: f64, lambda_max: f64) -> Result<Self> {
        let hp = Self {
            alpha,
            lambda,
            lambda_min,
            lambda_max,
        };
        hp.validate()?;
        Ok(hp)
    }

    /// Settings used for the sequence-recognition experiments (`alpha = 1`).
    pub fn ocr() -> Self {
        Self {
            alpha: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.lambda, self.lambda_min, self.lambda_max];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidHyperParams("non-finite value".into()));
        }
        if self.alpha < 0.0 {
            return Err(Error::InvalidHyperParams(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if self.lambda <= 0.0 {
            return Err(Error::InvalidHyperParams(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if self.lambda_min < 0.0 {
            return Err(Error::InvalidHyperParams(format!(
                "lambda_min must be >= 0, got {}",
                self.lambda_min
            )));
        }
        if self.lambda_max <= self.lambda_min {
            return Err(Error::InvalidHyperParams(format!(
                "lambda_max ({}) must exceed lambda_min ({})",
                self.lambda_max, self.lambda_min
            )));
        }
        Ok(())
    }
}

/// `log(1 + e^x)` without overflow: `max(x, 0) + log1p(e^-|x|)`.
#[inline]
pub fn stable_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic function, evaluated on the side that cannot overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sum(exp(v)))` with max-shift. Returns `-inf` for an empty slice or
/// when every entry is `-inf`.
///
/// The largest term is kept out of the sum and the rest go through `ln_1p`,
/// so a result near zero keeps tails far below machine epsilon.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let Some((top, &max)) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
    else {
        return f64::NEG_INFINITY;
    };
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let rest: f64 = values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, v)| (v - max).exp())
        .sum();
    max + rest.ln_1p()
}

/// Binary hard OSM with the Lagrangian non-negativity term (active for `y = 1`).
pub fn hard_osm_binary(s: f64, y: u8, hp: &HyperParams) -> f64 {
    let yf = if y == 1 { 1.0 } else { 0.0 };
    yf * (s - hp.lambda_min).max(0.0)
        + hp.lambda * (hp.lambda_max - s).max(0.0) * (1.0 - yf)
        + hp.alpha * (-s).max(0.0) * yf
}

pub fn hard_osm_multiclass(s: &[f64], y: usize, hp: &HyperParams) -> Result<f64> {
    check_label(y, s.len())?;
    let sy = s[y];
    let negatives: f64 = s
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != y)
        .map(|(_, &sj)| (hp.lambda_max - sj).max(0.0))
        .sum();
    Ok((sy - hp.lambda_min).max(0.0) + hp.alpha * (-sy).max(0.0) + hp.lambda * negatives)
}

/// Subgradient of [`hard_osm_multiclass`]; zero on the flat side of every kink.
pub fn hard_osm_multiclass_grad(s: &[f64], y: usize, hp: &HyperParams) -> Result<Vec<f64>> {
    check_label(y, s.len())?;
    let mut grad: Vec<f64> = s
        .iter()
        .map(|&sj| if sj < hp.lambda_max { -hp.lambda } else { 0.0 })
        .collect();
    let sy = s[y];
    let upper = if sy > hp.lambda_min { 1.0 } else { 0.0 };
    let lower = if sy < 0.0 { hp.alpha } else { 0.0 };
    grad[y] = upper - lower;
    Ok(grad)
}

pub fn soft_osm(s: &[f64], y: usize, hp: &HyperParams) -> Result<f64> {
    check_label(y, s.len())?;
    Ok(soft_osm_unchecked(s, y, hp))
}

fn soft_osm_unchecked(s: &[f64], y: usize, hp: &HyperParams) -> f64 {
    let sy = s[y];
    let negatives: f64 = s
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != y)
        .map(|(_, &sj)| stable_softplus(hp.lambda_max - sj))
        .sum();
    stable_softplus(sy - hp.lambda_min) + hp.alpha * stable_softplus(-sy) + hp.lambda * negatives
}

pub fn soft_osm_grad(s: &[f64], y: usize, hp: &HyperParams) -> Result<Vec<f64>> {
    check_label(y, s.len())?;
    let mut grad: Vec<f64> = s
        .iter()
        .map(|&sj| -hp.lambda * sigmoid(hp.lambda_max - sj))
        .collect();
    grad[y] = true_class_slope(s[y], hp);
    Ok(grad)
}

#[inline]
fn true_class_slope(sy: f64, hp: &HyperParams) -> f64 {
    sigmoid(sy - hp.lambda_min) - hp.alpha * sigmoid(-sy)
}

/// Unnormalized log-probability of the rejection class:
/// `-lambda * sum_j softplus(lambda_max - s_j)`.
fn rejection_logit(s: &[f64], hp: &HyperParams) -> f64 {
    -hp.lambda
        * s.iter()
            .map(|&sj| stable_softplus(hp.lambda_max - sj))
            .sum::<f64>()
}

/// Normalized log-probabilities of the `C` classes plus the rejection class
/// (index `C`). Class `k` has unnormalized log-probability `-soft_osm(s, k)`.
///
/// Unlike a softmax this is not shift-invariant: raising every score moves
/// mass towards the rejection class.
pub fn osm_log_probs(s: &[f64], hp: &HyperParams) -> Vec<f64> {
    let mut logits: Vec<f64> = (0..s.len())
        .map(|k| -soft_osm_unchecked(s, k, hp))
        .collect();
    logits.push(rejection_logit(s, hp));
    let norm = log_sum_exp(&logits);
    logits.iter_mut().for_each(|l| *l -= norm);
    logits
}

/// Vector-Jacobian product of [`osm_log_probs`]: given `upstream = dL/d(log p)`
/// (length `C + 1`) returns `dL/ds` (length `C`).
pub fn osm_log_probs_backward(s: &[f64], hp: &HyperParams, upstream: &[f64]) -> Result<Vec<f64>> {
    let classes = s.len();
    crate::error::check_len("osm_log_probs_backward upstream", classes + 1, upstream.len())?;
    let log_probs = osm_log_probs(s, hp);
    let total: f64 = upstream.iter().sum();
    // Gradient w.r.t. the unnormalized logits.
    let d_logit: Vec<f64> = upstream
        .iter()
        .zip(&log_probs)
        .map(|(g, lp)| g - lp.exp() * total)
        .collect();
    let d_classes: f64 = d_logit[..classes].iter().sum();
    let d_reject = d_logit[classes];
    Ok(s.iter()
        .enumerate()
        .map(|(i, &si)| {
            // d(logit_k)/d(s_i) = -slope(s_i) for k == i, lambda*sigma(lmax - s_i) for
            // k != i (including the rejection logit).
            let push = hp.lambda * sigmoid(hp.lambda_max - si);
            -d_logit[i] * true_class_slope(si, hp) + push * (d_classes - d_logit[i] + d_reject)
        })
        .collect())
}

/// Softmax cross-entropy and its gradient `softmax - onehot(y)`.
pub fn cross_entropy(logits: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
    check_label(y, logits.len())?;
    let norm = log_sum_exp(logits);
    let loss = norm - logits[y];
    let mut grad: Vec<f64> = logits.iter().map(|l| (l - norm).exp()).collect();
    grad[y] -= 1.0;
    Ok((loss, grad))
}

/// Log-softmax, used for the plain-CTC frame distribution.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let norm = log_sum_exp(logits);
    logits.iter().map(|l| l - norm).collect()
}

/// Backward pass of [`log_softmax`] given its output and `dL/d(output)`.
pub fn log_softmax_backward(log_probs: &[f64], upstream: &[f64]) -> Vec<f64> {
    let total: f64 = upstream.iter().sum();
    upstream
        .iter()
        .zip(log_probs)
        .map(|(g, lp)| g - lp.exp() * total)
        .collect()
}

/// Weston-Watkins multiclass hinge `sum_{j != y} max(0, margin + s_j - s_y)`
/// with its subgradient (zero at the kink).
pub fn hinge_multiclass(s: &[f64], y: usize, margin: f64) -> Result<(f64, Vec<f64>)> {
    check_label(y, s.len())?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; s.len()];
    for (j, &sj) in s.iter().enumerate() {
        if j == y {
            continue;
        }
        let violation = margin + sj - s[y];
        if violation > 0.0 {
            loss += violation;
            grad[j] += 1.0;
            grad[y] -= 1.0;
        }
    }
    Ok((loss, grad))
}

/// Logistic loss on a single logit, `softplus(-s)` for `y = 1` and
/// `softplus(s)` for `y = 0`, with gradient `sigmoid(s) - y`.
pub fn binary_cross_entropy(s: f64, y: u8) -> (f64, f64) {
    if y == 1 {
        (stable_softplus(-s), sigmoid(s) - 1.0)
    } else {
        (stable_softplus(s), sigmoid(s))
    }
}

/// OSM decision rule: the lowest score wins, ties go to the lowest index.
pub fn predict_osm(s: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in s.iter().enumerate().skip(1) {
        if v < s[best] {
            best = i;
        }
    }
    best
}

/// Binary OSM decision: positive when the score is below the midpoint of the
/// margin planes.
pub fn predict_osm_binary(s: f64, hp: &HyperParams) -> u8 {
    if s < 0.5 * (hp.lambda_min + hp.lambda_max) {
        1
    } else {
        0
    }
}

/// Highest score wins, ties go to the lowest index.
pub fn predict_argmax(s: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in s.iter().enumerate().skip(1) {
        if v > s[best] {
            best = i;
        }
    }
    best
}

/// Every loss the training harness understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    SoftOsm,
    HardOsm,
    Ce,
    BinaryCe,
    Hinge,
    OsmCtc,
    Ctc,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::SoftOsm,
        LossKind::HardOsm,
        LossKind::Ce,
        LossKind::BinaryCe,
        LossKind::Hinge,
        LossKind::OsmCtc,
        LossKind::Ctc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::SoftOsm => "soft-osm",
            LossKind::HardOsm => "hard-osm",
            LossKind::Ce => "ce",
            LossKind::BinaryCe => "binary-ce",
            LossKind::Hinge => "hinge",
            LossKind::OsmCtc => "osm-ctc",
            LossKind::Ctc => "ctc",
        }
    }

    pub fn is_sequence(self) -> bool {
        matches!(self, LossKind::OsmCtc | LossKind::Ctc)
    }

    pub fn is_osm(self) -> bool {
        matches!(self, LossKind::SoftOsm | LossKind::HardOsm | LossKind::OsmCtc)
    }

    /// Number of model outputs needed for `classes` classes.
    pub fn output_dim(self, classes: usize) -> usize {
        match self {
            LossKind::BinaryCe => 1,
            LossKind::Ctc => classes + 1,
            _ => classes,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        // "osm" alone means the soft variant, the one used for training.
        if key == "osm" {
            return Ok(LossKind::SoftOsm);
        }
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown loss kind {s:?}")))
    }
}

/// Settings shared by the classification losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSettings {
    pub hp: HyperParams,
    pub hinge_margin: f64,
}

impl Default for LossSettings {
    fn default() -> Self {
        Self {
            hp: HyperParams::default(),
            hinge_margin: 1.0,
        }
    }
}

/// Loss value and score gradient for one classification example.
pub fn classification_loss(
    kind: LossKind,
    scores: &[f64],
    label: usize,
    settings: &LossSettings,
) -> Result<(f64, Vec<f64>)> {
    let hp = &settings.hp;
    match kind {
        LossKind::SoftOsm => Ok((soft_osm(scores, label, hp)?, soft_osm_grad(scores, label, hp)?)),
        LossKind::HardOsm => Ok((
            hard_osm_multiclass(scores, label, hp)?,
            hard_osm_multiclass_grad(scores, label, hp)?,
        )),
        LossKind::Ce => cross_entropy(scores, label),
        LossKind::Hinge => hinge_multiclass(scores, label, settings.hinge_margin),
        LossKind::BinaryCe => {
            crate::error::check_len("binary-ce scores", 1, scores.len())?;
            check_label(label, 2)?;
            let (loss, grad) = binary_cross_entropy(scores[0], label as u8);
            Ok((loss, vec![grad]))
        }
        LossKind::OsmCtc | LossKind::Ctc => Err(Error::InvalidArgument(format!(
            "{kind} is a sequence loss, not a classification loss"
        ))),
    }
}

/// Predicted class under the decision rule that matches `kind`.
pub fn predict(kind: LossKind, scores: &[f64]) -> usize {
    match kind {
        LossKind::SoftOsm | LossKind::HardOsm | LossKind::OsmCtc => predict_osm(scores),
        LossKind::BinaryCe => usize::from(scores[0] > 0.0),
        LossKind::Ce | LossKind::Hinge | LossKind::Ctc => predict_argmax(scores),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn hp() -> HyperParams {
        HyperParams::default()
    }

    fn central_diff(f: impl Fn(&[f64]) -> f64, s: &[f64], h: f64) -> Vec<f64> {
        (0..s.len())
            .map(|i| {
                let mut p = s.to_vec();
                let mut m = s.to_vec();
                p[i] += h;
                m[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
            .fold(0.0, f64::max)
    }

    #[test]
    fn hyperparams_validation() {
        assert!(HyperParams::new(0.1, 1.0, 100.0, 600.0).is_ok());
        assert!(HyperParams::new(0.1, 1.0, 100.0, 100.0).is_err());
        assert!(HyperParams::new(0.1, 0.0, 100.0, 600.0).is_err());
        assert!(HyperParams::new(-0.1, 1.0, 100.0, 600.0).is_err());
        assert!(HyperParams::new(0.1, 1.0, -1.0, 600.0).is_err());
    }

    #[test]
    fn softplus_values() {
        assert!((stable_softplus(0.0) - LN2).abs() < 1e-15);
        assert!((stable_softplus(600.0) - 600.0).abs() <= 600.0 * 1e-12);
        let tiny = stable_softplus(-600.0);
        assert!(tiny > 0.0 && tiny < 1e-200);
        assert!(stable_softplus(1e6).is_finite());
        assert_eq!(stable_softplus(-1e6), 0.0);
    }

    #[test]
    fn hard_binary_examples() {
        assert_eq!(hard_osm_binary(50.0, 1, &hp()), 0.0);
        assert_eq!(hard_osm_binary(400.0, 0, &hp()), 200.0);
        assert!((hard_osm_binary(-20.0, 1, &hp()) - 2.0).abs() < 1e-12);
        assert_eq!(hard_osm_binary(600.0, 0, &hp()), 0.0);
        assert!(hard_osm_binary(101.0, 1, &hp()) > 0.0);
    }

    #[test]
    fn hard_multiclass_examples() {
        assert_eq!(hard_osm_multiclass(&[50.0, 700.0, 650.0], 0, &hp()).unwrap(), 0.0);
        assert_eq!(hard_osm_multiclass(&[150.0, 500.0], 0, &hp()).unwrap(), 150.0);
        assert!((hard_osm_multiclass(&[-10.0, 650.0], 0, &hp()).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            hard_osm_multiclass(&[1.0, 2.0], 2, &hp()),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn soft_osm_examples() {
        // Frozen from a 50-digit evaluation of the same sum.
        let v = soft_osm(&[100.0, 1200.0], 0, &hp()).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-6);
        let v = soft_osm(&[0.0, 600.0], 0, &hp()).unwrap();
        assert!((v - 0.762_461_898_615_939_8).abs() < 1e-6);
        assert!(soft_osm(&[0.0], 1, &hp()).is_err());
    }

    #[test]
    fn soft_osm_asymptotic_slope_is_one() {
        let a = soft_osm(&[2000.0, 900.0], 0, &hp()).unwrap();
        let b = soft_osm(&[3000.0, 900.0], 0, &hp()).unwrap();
        assert!(((b - a) / 1000.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn soft_osm_grad_examples() {
        let g = soft_osm_grad(&[100.0, 1200.0], 0, &hp()).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-12);
        assert!(g[1].abs() < 1e-200);
        let g = soft_osm_grad(&[-1e4, 700.0], 0, &hp()).unwrap();
        assert!((g[0] + 0.1).abs() < 1e-12);
    }

    #[test]
    fn log_probs_at_zero_scores() {
        let lp = osm_log_probs(&[0.0, 0.0], &hp());
        assert_eq!(lp.len(), 3);
        assert!((lp[0].exp() - 0.5).abs() < 1e-12);
        assert!((lp[1].exp() - 0.5).abs() < 1e-12);
        assert!(lp[2].exp() < 1e-200);
        // 50-digit oracle: log p(reject) = -600.62383246250395
        assert!((lp[2] + 600.623_832_462_503_9).abs() < 1e-9);
    }

    #[test]
    fn log_probs_beyond_outer_plane_favor_rejection() {
        let lp = osm_log_probs(&[600.0, 600.0], &hp());
        assert!(lp[2].abs() < 1e-12);
        assert!((lp[0] + 499.306_852_819_440_05).abs() < 1e-9);
        assert_eq!(lp[0], lp[1]);
    }

    #[test]
    fn log_probs_equal_scores_equal_classes() {
        let lp = osm_log_probs(&[123.0; 5], &hp());
        for k in 1..5 {
            assert_eq!(lp[0], lp[k]);
        }
    }

    #[test]
    fn log_probs_are_not_shift_invariant() {
        // near the midpoint of the planes, where class and rejection mass compete
        let s = [350.0, 360.0, 900.0];
        let a = osm_log_probs(&s, &hp());
        let shifted: Vec<f64> = s.iter().map(|v| v + 100.0).collect();
        let b = osm_log_probs(&shifted, &hp());
        let diff = a.iter().zip(&b).map(|(x, y)| (x.exp() - y.exp()).abs()).fold(0.0, f64::max);
        assert!(diff > 1e-3, "osm_log_probs behaves like a softmax");
    }

    #[test]
    fn cross_entropy_examples() {
        let (l, _) = cross_entropy(&[0.3; 10], 4).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
        let (l, g) = cross_entropy(&[1000.0, 0.0], 0).unwrap();
        assert!(l < 1e-300);
        assert!(g[0].abs() < 1e-300 && g[1].abs() < 1e-300);
        assert!(cross_entropy(&[0.0], 1).is_err());
    }

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge_multiclass(&[2.0, 0.5, -1.0], 0, 1.0).unwrap().0, 0.0);
        assert!((hinge_multiclass(&[1.0, 0.8], 0, 1.0).unwrap().0 - 0.8).abs() < 1e-12);
        let (l, g) = hinge_multiclass(&[0.0, 0.0], 0, 1.0).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g, vec![-1.0, 1.0]);
        assert!(hinge_multiclass(&[0.0], 3, 1.0).is_err());
    }

    #[test]
    fn binary_ce_examples() {
        assert!((binary_cross_entropy(0.0, 1).0 - LN2).abs() < 1e-15);
        assert!(binary_cross_entropy(100.0, 1).0 < 1e-40);
        assert_eq!(binary_cross_entropy(0.0, 0).1, 0.5);
    }

    #[test]
    fn predictions() {
        assert_eq!(predict_osm(&[50.0, 700.0, 650.0]), 0);
        assert_eq!(predict_osm(&[5.0, 5.0, 9.0]), 0);
        assert_eq!(predict_osm(&[600.0, 20.0]), 1);
        assert_eq!(predict_osm_binary(50.0, &hp()), 1);
        assert_eq!(predict_osm_binary(650.0, &hp()), 0);
        assert_eq!(predict_osm_binary(350.0, &hp()), 0);
        assert_eq!(predict_osm_binary(349.999, &hp()), 1);
        assert_eq!(predict_argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn decision_rule_routing() {
        // argmin is index 2, argmax is index 0
        let s = [9.0, 4.0, 1.0];
        assert_eq!(predict(LossKind::SoftOsm, &s), 2);
        assert_eq!(predict(LossKind::HardOsm, &s), 2);
        assert_eq!(predict(LossKind::Ce, &s), 0);
        assert_eq!(predict(LossKind::Hinge, &s), 0);
    }

    #[test]
    fn loss_kind_names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.name().parse::<LossKind>().unwrap(), k);
        }
        assert_eq!("osm".parse::<LossKind>().unwrap(), LossKind::SoftOsm);
        assert!("squared-hinge".parse::<LossKind>().is_err());
    }

    #[test]
    fn osm_log_probs_backward_matches_finite_differences() {
        let s = [37.0, 420.0, 590.0, 800.0];
        let upstream = [0.3, -1.2, 0.7, 2.0, -0.4];
        let f = |x: &[f64]| -> f64 {
            osm_log_probs(x, &hp()).iter().zip(&upstream).map(|(a, b)| a * b).sum()
        };
        let numeric = central_diff(f, &s, 1e-4);
        let analytic = osm_log_probs_backward(&s, &hp(), &upstream).unwrap();
        assert!(rel_err(&analytic, &numeric) < 1e-6);
    }

    fn scores_strategy() -> impl Strategy<Value = (Vec<f64>, usize)> {
        (2usize..=10).prop_flat_map(|c| {
            (prop::collection::vec(-900.0f64..1500.0, c), 0..c)
        })
    }

    proptest! {
        #[test]
        fn soft_dominates_hard((s, y) in scores_strategy()) {
            let soft = soft_osm(&s, y, &hp()).unwrap();
            let hard = hard_osm_multiclass(&s, y, &hp()).unwrap();
            prop_assert!(soft >= hard);
            prop_assert!(soft > 0.0);
        }

        #[test]
        fn soft_grad_matches_finite_differences((s, y) in scores_strategy()) {
            let numeric = central_diff(|x| soft_osm(x, y, &hp()).unwrap(), &s, 1e-4);
            let analytic = soft_osm_grad(&s, y, &hp()).unwrap();
            prop_assert!(rel_err(&analytic, &numeric) < 1e-6);
        }

        #[test]
        fn log_probs_normalized((s, _) in scores_strategy(), scale in 1.0f64..10.0) {
            let s: Vec<f64> = s.iter().map(|v| v * scale).collect();
            let lp = osm_log_probs(&s, &hp());
            let total: f64 = lp.iter().map(|l| l.exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(lp.iter().all(|l| l.is_finite() && *l <= 1e-12));
        }

        #[test]
        fn permutation_equivariance((s, y) in scores_strategy(), rot in 0usize..10) {
            let c = s.len();
            let perm: Vec<usize> = (0..c).map(|i| (i + rot) % c).collect();
            // permuted[perm[i]] = s[i]
            let mut permuted = vec![0.0; c];
            for i in 0..c {
                permuted[perm[i]] = s[i];
            }
            let a = soft_osm(&s, y, &hp()).unwrap();
            let b = soft_osm(&permuted, perm[y], &hp()).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            let ga = soft_osm_grad(&s, y, &hp()).unwrap();
            let gb = soft_osm_grad(&permuted, perm[y], &hp()).unwrap();
            for i in 0..c {
                prop_assert_eq!(ga[i], gb[perm[i]]);
            }
            let ha = hard_osm_multiclass(&s, y, &hp()).unwrap();
            let hb = hard_osm_multiclass(&permuted, perm[y], &hp()).unwrap();
            prop_assert!((ha - hb).abs() <= 1e-9 * ha.abs().max(1.0));
        }

        #[test]
        fn ce_grad_matches_finite_differences((s, y) in scores_strategy()) {
            let s: Vec<f64> = s.iter().map(|v| v / 100.0).collect();
            let numeric = central_diff(|x| cross_entropy(x, y).unwrap().0, &s, 1e-4);
            let (_, analytic) = cross_entropy(&s, y).unwrap();
            prop_assert!(rel_err(&analytic, &numeric) < 1e-6);
        }
    }
}
