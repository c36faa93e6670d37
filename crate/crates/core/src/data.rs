//! Datasets: seeded synthetic generators and CSV ingestion.
//!
//! Generators draw from [`crate::rng::stream`], one stream per class (blobs,
//! rings) or per example (OCR sequences), so a dataset is a pure function of
//! its configuration and seed.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng as _;

use crate::ctc::Alphabet;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// One row per example, all of the same width.
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidArgument("dataset has no examples".into()));
        }
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset labels",
                expected: features.len(),
                got: labels.len(),
            });
        }
        let dim = features[0].len();
        if let Some(row) = features.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                context: "dataset feature width",
                expected: dim,
                got: row.len(),
            });
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: class_count,
            });
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    /// Apply `x -> A x` to every example. `a` is row-major `out x D`.
    pub fn transformed(&self, a: &[f64], out_dim: usize) -> Result<Self> {
        crate::error::check_len("transform matrix", out_dim * self.dim(), a.len())?;
        let features = self
            .features
            .iter()
            .map(|x| {
                (0..out_dim)
                    .map(|r| a[r * x.len()..(r + 1) * x.len()].iter().zip(x).map(|(p, q)| p * q).sum())
                    .collect()
            })
            .collect();
        Self::new(features, self.labels.clone(), self.class_count)
    }
}

/// Gaussian blobs with class means evenly spaced on a circle of radius 10 in
/// the first two coordinates.
pub fn gen_blobs(n_per_class: usize, classes: usize, dim: usize, spread: f64, seed: u64) -> Result<LabeledDataset> {
    if classes < 2 || dim < 2 || n_per_class == 0 {
        return Err(Error::InvalidArgument(format!(
            "blobs need classes >= 2, dim >= 2, n >= 1 (got {classes}, {dim}, {n_per_class})"
        )));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidArgument(format!("spread must be >= 0, got {spread}")));
    }
    let mut features = Vec::with_capacity(n_per_class * classes);
    let mut labels = Vec::with_capacity(n_per_class * classes);
    for c in 0..classes {
        let angle = TAU * c as f64 / classes as f64;
        let mut mean = vec![0.0; dim];
        mean[0] = 10.0 * angle.cos();
        mean[1] = 10.0 * angle.sin();
        let mut r = rng::stream(seed, c as u64);
        for _ in 0..n_per_class {
            features.push(mean.iter().map(|m| m + rng::gaussian(&mut r, spread)).collect());
            labels.push(c);
        }
    }
    LabeledDataset::new(features, labels, classes)
}

/// Two concentric 2-D annuli: class 0 at radius 4 +/- 0.5, class 1 at 8 +/- 0.5.
pub fn gen_rings(n_per_class: usize, seed: u64) -> Result<LabeledDataset> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("rings need n >= 1".into()));
    }
    let mut features = Vec::with_capacity(2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for (c, radius) in [4.0f64, 8.0].into_iter().enumerate() {
        let mut r = rng::stream(seed, c as u64);
        for _ in 0..n_per_class {
            let rho = radius + r.random_range(-0.5..0.5);
            let theta = r.random_range(0.0..TAU);
            features.push(vec![rho * theta.cos(), rho * theta.sin()]);
            labels.push(c);
        }
    }
    LabeledDataset::new(features, labels, 2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceExample {
    /// `T x D` frame features.
    pub features: Vec<Vec<f64>>,
    /// Symbol indices into the dataset alphabet.
    pub target: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub examples: Vec<SequenceExample>,
    pub alphabet: Alphabet,
}

impl SequenceDataset {
    pub fn new(examples: Vec<SequenceExample>, alphabet: Alphabet) -> Result<Self> {
        let dim = examples
            .first()
            .and_then(|e| e.features.first())
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidArgument("sequence dataset has no frames".into()))?;
        for ex in &examples {
            if ex.features.is_empty() {
                return Err(Error::InvalidArgument("sequence with no frames".into()));
            }
            if let Some(f) = ex.features.iter().find(|f| f.len() != dim) {
                return Err(Error::DimensionMismatch {
                    context: "sequence frame width",
                    expected: dim,
                    got: f.len(),
                });
            }
            if let Some(&bad) = ex.target.iter().find(|&&l| l >= alphabet.len()) {
                return Err(Error::LabelOutOfRange {
                    label: bad,
                    classes: alphabet.len(),
                });
            }
        }
        Ok(Self { examples, alphabet })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.examples[0].features[0].len()
    }

    pub fn symbols(&self) -> usize {
        self.alphabet.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcrGenConfig {
    pub count: usize,
    pub alphabet: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Frames emitted per character.
    pub repeats: usize,
    pub noise: f64,
}

impl Default for OcrGenConfig {
    fn default() -> Self {
        Self {
            count: 200,
            alphabet: 4,
            min_len: 2,
            max_len: 5,
            repeats: 2,
            noise: 0.3,
        }
    }
}

/// Synthetic OCR corpus. Each character emits `repeats` copies of its one-hot
/// template plus Gaussian noise; a clean all-zero frame separates adjacent
/// duplicate characters so every target stays CTC-feasible.
pub fn gen_ocr_sequences(config: &OcrGenConfig, seed: u64) -> Result<SequenceDataset> {
    let OcrGenConfig {
        count,
        alphabet,
        min_len,
        max_len,
        repeats,
        noise,
    } = *config;
    if alphabet < 2 || repeats < 1 || count == 0 || min_len < 1 || max_len < min_len {
        return Err(Error::InvalidArgument(format!("invalid OCR generator settings {config:?}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise must be >= 0, got {noise}")));
    }
    let symbols = Alphabet::first(alphabet)?;
    let examples = (0..count)
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let len = r.random_range(min_len..=max_len);
            let target: Vec<usize> = (0..len).map(|_| r.random_range(0..alphabet)).collect();
            let mut features = Vec::with_capacity(len * (repeats + 1));
            for (pos, &ch) in target.iter().enumerate() {
                if pos > 0 && target[pos - 1] == ch {
                    features.push(vec![0.0; alphabet]);
                }
                for _ in 0..repeats {
                    let frame: Vec<f64> = (0..alphabet)
                        .map(|k| f64::from(u8::from(k == ch)) + rng::gaussian(&mut r, noise))
                        .collect();
                    features.push(frame);
                }
            }
            SequenceExample { features, target }
        })
        .collect();
    SequenceDataset::new(examples, symbols)
}

/// Original label tokens in class-index order.
pub type LabelMap = Vec<String>;

/// Parse `label,f1,f2,...` rows. Blank lines and lines starting with `#` are
/// skipped. Labels may be any token and are remapped to `0..C` in order of
/// first appearance.
pub fn load_csv(path: &Path) -> Result<(LabeledDataset, LabelMap)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    parse_csv(&text).map_err(|e| match e {
        Error::EmptyFile(_) => Error::EmptyFile(path.to_path_buf()),
        other => other,
    })
}

pub fn parse_csv(text: &str) -> Result<(LabeledDataset, LabelMap)> {
    let mut label_map: LabelMap = Vec::new();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(Error::RaggedRow {
                line: line_no,
                expected,
                found: fields.len(),
            });
        }
        if fields.len() < 2 || fields[0].is_empty() {
            return Err(Error::NonNumeric {
                line: line_no,
                field: 1,
                value: line.to_string(),
            });
        }
        let row = fields[1..]
            .iter()
            .enumerate()
            .map(|(i, f)| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::NonNumeric {
                        line: line_no,
                        field: i + 2,
                        value: f.to_string(),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        let label = match label_map.iter().position(|l| l == fields[0]) {
            Some(i) => i,
            None => {
                label_map.push(fields[0].to_string());
                label_map.len() - 1
            }
        };
        features.push(row);
        labels.push(label);
    }
    if features.is_empty() {
        return Err(Error::EmptyFile(Default::default()));
    }
    let classes = label_map.len();
    Ok((LabeledDataset::new(features, labels, classes)?, label_map))
}

/// Inverse of [`parse_csv`]: writes 17 significant digits per feature so the
/// text round-trips exactly. `names` supplies label tokens (defaults to the
/// class index).
pub fn to_csv(dataset: &LabeledDataset, names: Option<&LabelMap>) -> String {
    let mut out = String::new();
    for (row, &label) in dataset.features.iter().zip(&dataset.labels) {
        match names.and_then(|n| n.get(label)) {
            Some(name) => out.push_str(name),
            None => {
                let _ = write!(out, "{label}");
            }
        }
        for v in row {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    out
}

pub fn save_csv(dataset: &LabeledDataset, names: Option<&LabelMap>, path: &Path) -> Result<()> {
    fs::write(path, to_csv(dataset, names))?;
    Ok(())
}
