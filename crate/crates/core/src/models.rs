//! Score functions: a linear classifier and a one-hidden-layer ReLU MLP.
//!
//! Parameters live in one flat `Vec<f64>` per model so the optimizers and the
//! checkpoint format can treat every model the same way. Matrices are
//! row-major with shape `(out, in)`.
//!
//! Linear layout: `weights (C x D) | bias (C)`.
//! MLP layout: `hidden_weights (H x D) | hidden_bias (H) | out_weights (C x H) | out_bias (C)`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{check_len, Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelConfig {
    Linear { inputs: usize, outputs: usize },
    Mlp { inputs: usize, hidden: usize, outputs: usize },
}

impl ModelConfig {
    pub fn inputs(&self) -> usize {
        match *self {
            ModelConfig::Linear { inputs, .. } | ModelConfig::Mlp { inputs, .. } => inputs,
        }
    }

    pub fn outputs(&self) -> usize {
        match *self {
            ModelConfig::Linear { outputs, .. } | ModelConfig::Mlp { outputs, .. } => outputs,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            ModelConfig::Linear { inputs, outputs } => outputs * inputs + outputs,
            ModelConfig::Mlp {
                inputs,
                hidden,
                outputs,
            } => hidden * inputs + hidden + outputs * hidden + outputs,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ModelConfig::Linear { inputs, outputs } => inputs >= 1 && outputs >= 1,
            ModelConfig::Mlp {
                inputs,
                hidden,
                outputs,
            } => inputs >= 1 && hidden >= 1 && outputs >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("degenerate model dimensions {self:?}")))
        }
    }
}

/// A score function `f(x) -> s` with flat parameter storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: Vec<f64>,
}

/// Output of [`Model::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Same layout as [`Model::params`].
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

impl Model {
    /// He initialization: weights from `N(0, 2 / fan_in)`, biases zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::seeded(seed);
        let mut params = Vec::with_capacity(config.param_count());
        match config {
            ModelConfig::Linear { inputs, outputs } => {
                push_gaussian(&mut params, &mut rng, outputs * inputs, inputs);
                params.resize(params.len() + outputs, 0.0);
            }
            ModelConfig::Mlp {
                inputs,
                hidden,
                outputs,
            } => {
                push_gaussian(&mut params, &mut rng, hidden * inputs, inputs);
                params.resize(params.len() + hidden, 0.0);
                push_gaussian(&mut params, &mut rng, outputs * hidden, hidden);
                params.resize(params.len() + outputs, 0.0);
            }
        }
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        check_len("model parameters", config.param_count(), params.len())?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite model parameter".into()));
        }
        Ok(Self { config, params })
    }

    /// Linear model from a row-major `C x D` weight matrix and a bias.
    pub fn linear(weights: &[f64], bias: &[f64]) -> Result<Self> {
        let outputs = bias.len();
        if outputs == 0 || !weights.len().is_multiple_of(outputs) {
            return Err(Error::InvalidArgument(format!(
                "weight matrix of {} entries does not fit {} rows",
                weights.len(),
                outputs
            )));
        }
        let config = ModelConfig::Linear {
            inputs: weights.len() / outputs,
            outputs,
        };
        Self::from_params(config, [weights, bias].concat())
    }

    pub fn config(&self) -> ModelConfig {
        self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("model input", self.config.inputs(), x.len())?;
        Ok(match self.config {
            ModelConfig::Linear { inputs, outputs } => {
                let (w, b) = self.params.split_at(outputs * inputs);
                affine(w, b, x)
            }
            ModelConfig::Mlp {
                inputs,
                hidden,
                outputs,
            } => {
                let (hw, rest) = self.params.split_at(hidden * inputs);
                let (hb, rest) = rest.split_at(hidden);
                let (ow, ob) = rest.split_at(outputs * hidden);
                let mut h = affine(hw, hb, x);
                h.iter_mut().for_each(|v| *v = v.max(0.0));
                affine(ow, ob, &h)
            }
        })
    }

    /// Hidden-layer pre-activations for an MLP, `None` for a linear model.
    pub fn hidden_pre_activations(&self, x: &[f64]) -> Result<Option<Vec<f64>>> {
        check_len("model input", self.config.inputs(), x.len())?;
        Ok(match self.config {
            ModelConfig::Linear { .. } => None,
            ModelConfig::Mlp { inputs, hidden, .. } => {
                let (hw, rest) = self.params.split_at(hidden * inputs);
                Some(affine(hw, &rest[..hidden], x))
            }
        })
    }

    /// Gradients of `upstream . forward(x)` with respect to every parameter
    /// and to `x`. The ReLU derivative is taken as 0 at 0.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<Gradients> {
        check_len("model input", self.config.inputs(), x.len())?;
        check_len("upstream gradient", self.config.outputs(), upstream.len())?;
        let mut grads = vec![0.0; self.params.len()];
        let input = match self.config {
            ModelConfig::Linear { inputs, outputs } => {
                let (gw, gb) = grads.split_at_mut(outputs * inputs);
                let w = &self.params[..outputs * inputs];
                affine_backward(w, x, upstream, gw, gb)
            }
            ModelConfig::Mlp {
                inputs,
                hidden,
                outputs,
            } => {
                let (hw, rest) = self.params.split_at(hidden * inputs);
                let (hb, rest) = rest.split_at(hidden);
                let ow = &rest[..outputs * hidden];
                let pre = affine(hw, hb, x);
                let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();

                let (ghw, grest) = grads.split_at_mut(hidden * inputs);
                let (ghb, grest) = grest.split_at_mut(hidden);
                let (gow, gob) = grest.split_at_mut(outputs * hidden);
                let mut d_hidden = affine_backward(ow, &act, upstream, gow, gob);
                for (d, p) in d_hidden.iter_mut().zip(&pre) {
                    if *p <= 0.0 {
                        *d = 0.0;
                    }
                }
                affine_backward(hw, x, &d_hidden, ghw, ghb)
            }
        };
        Ok(Gradients {
            params: grads,
            input,
        })
    }

    /// Write a text checkpoint.
    ///
    /// Format, one token group per line:
    ///
    /// ```text
    /// osmargin-checkpoint 1
    /// linear <inputs> <outputs>            | mlp <inputs> <hidden> <outputs>
    /// <param_count>
    /// <param 0>
    /// ...
    /// ```
    ///
    /// Parameters are in the flat layout described at module level and are
    /// printed with Rust's shortest round-trip formatting, so loading restores
    /// every `f64` bit-for-bit.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::from("osmargin-checkpoint 1\n");
        match self.config {
            ModelConfig::Linear { inputs, outputs } => {
                let _ = writeln!(out, "linear {inputs} {outputs}");
            }
            ModelConfig::Mlp {
                inputs,
                hidden,
                outputs,
            } => {
                let _ = writeln!(out, "mlp {inputs} {hidden} {outputs}");
            }
        }
        let _ = writeln!(out, "{}", self.params.len());
        for p in &self.params {
            let _ = writeln!(out, "{p:?}");
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("osmargin-checkpoint 1") {
            return Err(bad("missing header"));
        }
        let dims_line = lines.next().ok_or_else(|| bad("missing dimensions"))?;
        let tokens: Vec<&str> = dims_line.split_whitespace().collect();
        let dims: Vec<usize> = tokens
            .iter()
            .skip(1)
            .map(|t| t.parse::<usize>().map_err(|_| bad("bad dimension")))
            .collect::<Result<_>>()?;
        let config = match (tokens.first().copied(), dims.as_slice()) {
            (Some("linear"), &[inputs, outputs]) => ModelConfig::Linear { inputs, outputs },
            (Some("mlp"), &[inputs, hidden, outputs]) => ModelConfig::Mlp {
                inputs,
                hidden,
                outputs,
            },
            _ => return Err(bad("unknown model kind")),
        };
        let count: usize = lines
            .next()
            .and_then(|l| l.trim().parse().ok())
            .ok_or_else(|| bad("missing parameter count"))?;
        if count != config.param_count() {
            return Err(bad("parameter count does not match dimensions"));
        }
        let params: Vec<f64> = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|_| bad("bad parameter value")))
            .collect::<Result<_>>()?;
        if params.len() != count {
            return Err(bad("wrong number of parameters"));
        }
        Self::from_params(config, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_checkpoint(&fs::read_to_string(path)?)
    }
}

fn push_gaussian(params: &mut Vec<f64>, rng: &mut Rng, count: usize, fan_in: usize) {
    let std = (2.0 / fan_in as f64).sqrt();
    params.extend((0..count).map(|_| rng::gaussian(rng, std)));
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(r, &bias)| {
            let row = &w[r * cols..(r + 1) * cols];
            bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

/// Accumulates `outer(upstream, x)` into `gw` and `upstream` into `gb`;
/// returns `w^T upstream`.
fn affine_backward(w: &[f64], x: &[f64], upstream: &[f64], gw: &mut [f64], gb: &mut [f64]) -> Vec<f64> {
    let cols = x.len();
    let mut dx = vec![0.0; cols];
    for (r, &g) in upstream.iter().enumerate() {
        gb[r] += g;
        if g == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        let grow = &mut gw[r * cols..(r + 1) * cols];
        for c in 0..cols {
            grow[c] += g * x[c];
            dx[c] += g * row[c];
        }
    }
    dx
}
