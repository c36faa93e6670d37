//! Connectionist temporal classification over per-frame log-probabilities.
//!
//! A frame distribution has `K + 1` entries: the `K` symbols followed by the
//! blank at index `K`. With OSM frame probabilities the blank is the OSM
//! rejection class, which sits in the same position.
//!
//! All dynamic programming runs in log space. Impossible states hold
//! [`LOG_ZERO`] instead of `-inf`, so sums and differences never produce NaN.

use crate::error::{Error, Result};
use crate::losses::{log_sum_exp, osm_log_probs, HyperParams};

/// Log-space stand-in for `log(0)`.
pub const LOG_ZERO: f64 = -1e300;

/// Largest path space [`ctc_brute_force`] will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Maps target strings onto symbol indices `0..K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<char>,
}

impl Alphabet {
    pub fn new(symbols: &str) -> Result<Self> {
        let symbols: Vec<char> = symbols.chars().collect();
        let mut sorted = symbols.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if symbols.is_empty() || sorted.len() != symbols.len() {
            return Err(Error::InvalidArgument(
                "alphabet must be non-empty with distinct symbols".into(),
            ));
        }
        Ok(Self { symbols })
    }

    /// The first `k` lowercase letters followed by digits.
    pub fn first(k: usize) -> Result<Self> {
        const POOL: &str = "abcdefghijklmnopqrstuvwxyz0123456789";
        if k == 0 || k > POOL.len() {
            return Err(Error::InvalidArgument(format!(
                "alphabet size must be in 1..={}, got {k}",
                POOL.len()
            )));
        }
        Self::new(&POOL[..k])
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Index of the blank symbol.
    pub fn blank(&self) -> usize {
        self.symbols.len()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| {
                self.symbols
                    .iter()
                    .position(|&s| s == c)
                    .ok_or_else(|| Error::InvalidArgument(format!("symbol {c:?} not in alphabet")))
            })
            .collect()
    }

    pub fn decode(&self, labels: &[usize]) -> String {
        labels.iter().filter_map(|&l| self.symbols.get(l)).collect()
    }
}

/// Minimum frame count that admits an alignment of `target`.
pub fn required_frames(target: &[usize]) -> usize {
    target.len() + adjacent_repeats(target)
}

fn adjacent_repeats(target: &[usize]) -> usize {
    target.windows(2).filter(|w| w[0] == w[1]).count()
}

pub fn check_feasible(frames: usize, target: &[usize]) -> Result<()> {
    let required = required_frames(target);
    if frames >= required && frames > 0 {
        Ok(())
    } else {
        Err(Error::InfeasibleTarget {
            target_len: target.len(),
            repeats: adjacent_repeats(target),
            required: required.max(1),
            frames,
        })
    }
}

/// Per-frame OSM log-probabilities; the rejection class becomes the blank.
pub fn osm_frame_log_probs(scores: &[Vec<f64>], hp: &HyperParams) -> Vec<Vec<f64>> {
    scores.iter().map(|s| osm_log_probs(s, hp)).collect()
}

/// Forward DP over the blank-augmented target.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcTable {
    /// `frames x (2 * |target| + 1)`.
    pub log_alpha: Vec<Vec<f64>>,
    /// Blank-augmented target `[blank, l1, blank, l2, ..., blank]`.
    pub extended: Vec<usize>,
}

impl CtcTable {
    pub fn log_likelihood(&self) -> f64 {
        let last = self.log_alpha.last().expect("at least one frame");
        let s = last.len();
        if s == 1 {
            last[0]
        } else {
            lse2(last[s - 1], last[s - 2])
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtcOutput {
    pub loss: f64,
    /// `d loss / d log_probs`, same shape as the input.
    pub grad: Vec<Vec<f64>>,
}

#[inline]
fn lse2(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[inline]
fn lse3(a: f64, b: f64, c: f64) -> f64 {
    let (hi, x, y) = if a >= b && a >= c {
        (a, b, c)
    } else if b >= c {
        (b, a, c)
    } else {
        (c, a, b)
    };
    hi + ((x - hi).exp() + (y - hi).exp()).ln_1p()
}

fn validate(log_probs: &[Vec<f64>], target: &[usize]) -> Result<usize> {
    let symbols = log_probs
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidArgument("CTC needs at least one frame".into()))?;
    if symbols < 1 {
        return Err(Error::InvalidArgument("frames must include a blank".into()));
    }
    if let Some(row) = log_probs.iter().find(|r| r.len() != symbols) {
        return Err(Error::DimensionMismatch {
            context: "CTC frame width",
            expected: symbols,
            got: row.len(),
        });
    }
    let blank = symbols - 1;
    if let Some(&bad) = target.iter().find(|&&l| l >= blank) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            classes: blank,
        });
    }
    check_feasible(log_probs.len(), target)?;
    Ok(blank)
}

fn extend(target: &[usize], blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(blank);
    for &l in target {
        ext.push(l);
        ext.push(blank);
    }
    ext
}

#[inline]
fn can_skip(ext: &[usize], s: usize, blank: usize) -> bool {
    s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]
}

pub fn ctc_forward(log_probs: &[Vec<f64>], target: &[usize]) -> Result<CtcTable> {
    let blank = validate(log_probs, target)?;
    let ext = extend(target, blank);
    let width = ext.len();
    let mut alpha = vec![vec![LOG_ZERO; width]; log_probs.len()];
    alpha[0][0] = log_probs[0][blank];
    if width > 1 {
        alpha[0][1] = log_probs[0][ext[1]];
    }
    for t in 1..log_probs.len() {
        for s in 0..width {
            let stay = alpha[t - 1][s];
            let step = if s >= 1 { alpha[t - 1][s - 1] } else { LOG_ZERO };
            let skip = if can_skip(&ext, s, blank) {
                alpha[t - 1][s - 2]
            } else {
                LOG_ZERO
            };
            alpha[t][s] = (lse3(stay, step, skip) + log_probs[t][ext[s]]).max(LOG_ZERO);
        }
    }
    Ok(CtcTable {
        log_alpha: alpha,
        extended: ext,
    })
}

fn ctc_backward_table(log_probs: &[Vec<f64>], ext: &[usize], blank: usize) -> Vec<Vec<f64>> {
    let frames = log_probs.len();
    let width = ext.len();
    let mut beta = vec![vec![LOG_ZERO; width]; frames];
    let last = frames - 1;
    beta[last][width - 1] = log_probs[last][ext[width - 1]];
    if width > 1 {
        beta[last][width - 2] = log_probs[last][ext[width - 2]];
    }
    for t in (0..last).rev() {
        for s in 0..width {
            let stay = beta[t + 1][s];
            let step = if s + 1 < width { beta[t + 1][s + 1] } else { LOG_ZERO };
            let skip = if s + 2 < width && can_skip(ext, s + 2, blank) {
                beta[t + 1][s + 2]
            } else {
                LOG_ZERO
            };
            beta[t][s] = (lse3(stay, step, skip) + log_probs[t][ext[s]]).max(LOG_ZERO);
        }
    }
    beta
}

/// Negative log-likelihood of `target` and its gradient with respect to every
/// entry of `log_probs` (treated as free variables).
pub fn ctc_loss(log_probs: &[Vec<f64>], target: &[usize]) -> Result<CtcOutput> {
    let table = ctc_forward(log_probs, target)?;
    let blank = log_probs[0].len() - 1;
    let log_likelihood = table.log_likelihood();
    let beta = ctc_backward_table(log_probs, &table.extended, blank);

    let symbols = blank + 1;
    let mut grad = Vec::with_capacity(log_probs.len());
    let mut occupancy = vec![LOG_ZERO; symbols];
    for (t, row) in log_probs.iter().enumerate() {
        occupancy.iter_mut().for_each(|o| *o = LOG_ZERO);
        for (s, &sym) in table.extended.iter().enumerate() {
            occupancy[sym] = lse2(occupancy[sym], table.log_alpha[t][s] + beta[t][s]);
        }
        grad.push(
            occupancy
                .iter()
                .zip(row)
                .map(|(&occ, &lp)| -(occ - lp - log_likelihood).exp())
                .collect(),
        );
    }
    Ok(CtcOutput {
        loss: -log_likelihood,
        grad,
    })
}

/// Collapse a frame labelling: merge adjacent repeats, then drop blanks.
pub fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != blank {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// Reference CTC loss by enumerating every frame labelling.
pub fn ctc_brute_force(log_probs: &[Vec<f64>], target: &[usize]) -> Result<f64> {
    let symbols = log_probs
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidArgument("CTC needs at least one frame".into()))?;
    let frames = log_probs.len();
    let size = (symbols as f64).powi(frames as i32);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::SearchSpaceTooLarge {
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let blank = symbols - 1;
    let mut path = vec![0usize; frames];
    let mut matching = Vec::new();
    loop {
        if collapse(&path, blank) == target {
            matching.push(path.iter().enumerate().map(|(t, &k)| log_probs[t][k]).sum::<f64>());
        }
        // odometer increment
        let mut t = 0;
        while t < frames {
            path[t] += 1;
            if path[t] < symbols {
                break;
            }
            path[t] = 0;
            t += 1;
        }
        if t == frames {
            break;
        }
    }
    Ok(-log_sum_exp(&matching))
}

/// Per-frame argmax (lowest index on ties), then [`collapse`].
pub fn greedy_decode(log_probs: &[Vec<f64>]) -> Vec<usize> {
    let Some(first) = log_probs.first() else {
        return Vec::new();
    };
    let blank = first.len() - 1;
    let path: Vec<usize> = log_probs
        .iter()
        .map(|row| crate::losses::predict_argmax(row))
        .collect();
    collapse(&path, blank)
}

/// Fraction of exact full-sequence matches.
pub fn ocr_accuracy<T: PartialEq>(predictions: &[T], targets: &[T]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            context: "ocr_accuracy",
            expected: targets.len(),
            got: predictions.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty list is undefined".into()));
    }
    let hits = predictions.iter().zip(targets).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / targets.len() as f64)
}
