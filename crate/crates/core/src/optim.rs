//! SGD with momentum, Adam, and learning-rate schedules.

use std::f64::consts::PI;

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    pub initial_lr: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            weight_decay: 0.0005,
            initial_lr: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub initial_lr: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            initial_lr: 0.001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerConfig {
    Sgd(SgdConfig),
    Adam(AdamConfig),
}

impl OptimizerConfig {
    pub fn initial_lr(&self) -> f64 {
        match self {
            OptimizerConfig::Sgd(c) => c.initial_lr,
            OptimizerConfig::Adam(c) => c.initial_lr,
        }
    }

    pub fn with_initial_lr(self, lr: f64) -> Self {
        match self {
            OptimizerConfig::Sgd(c) => OptimizerConfig::Sgd(SgdConfig { initial_lr: lr, ..c }),
            OptimizerConfig::Adam(c) => OptimizerConfig::Adam(AdamConfig { initial_lr: lr, ..c }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lr, wd) = match self {
            OptimizerConfig::Sgd(c) => {
                if !(0.0..1.0).contains(&c.momentum) {
                    return Err(Error::InvalidArgument(format!(
                        "momentum must be in [0, 1), got {}",
                        c.momentum
                    )));
                }
                (c.initial_lr, c.weight_decay)
            }
            OptimizerConfig::Adam(c) => {
                if !(0.0..1.0).contains(&c.beta1) || !(0.0..1.0).contains(&c.beta2) || c.eps <= 0.0 {
                    return Err(Error::InvalidArgument("invalid Adam moments".into()));
                }
                (c.initial_lr, c.weight_decay)
            }
        };
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be > 0, got {lr}")));
        }
        if wd.is_nan() || wd < 0.0 {
            return Err(Error::InvalidArgument(format!("weight decay must be >= 0, got {wd}")));
        }
        Ok(())
    }
}

/// One SGD step with classic (coupled) L2 decay:
/// `g = grad + wd * p; v = momentum * v - lr * g; p += v`.
pub fn sgd_step(
    params: &mut [f64],
    grads: &[f64],
    velocity: &mut [f64],
    config: &SgdConfig,
    lr: f64,
) -> Result<()> {
    check_len("sgd gradients", params.len(), grads.len())?;
    check_len("sgd velocity", params.len(), velocity.len())?;
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        let g = g + config.weight_decay * *p;
        *v = config.momentum * *v - lr * g;
        *p += *v;
    }
    Ok(())
}

/// Optimizer state owned by a training loop.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd {
        config: SgdConfig,
        velocity: Vec<f64>,
    },
    Adam {
        config: AdamConfig,
        m: Vec<f64>,
        v: Vec<f64>,
        steps: i32,
    },
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, param_count: usize) -> Self {
        match config {
            OptimizerConfig::Sgd(config) => Optimizer::Sgd {
                config,
                velocity: vec![0.0; param_count],
            },
            OptimizerConfig::Adam(config) => Optimizer::Adam {
                config,
                m: vec![0.0; param_count],
                v: vec![0.0; param_count],
                steps: 0,
            },
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        match self {
            Optimizer::Sgd { config, velocity } => sgd_step(params, grads, velocity, config, lr),
            Optimizer::Adam { config, m, v, steps } => {
                check_len("adam gradients", params.len(), grads.len())?;
                check_len("adam moments", params.len(), m.len())?;
                *steps += 1;
                let c1 = 1.0 - config.beta1.powi(*steps);
                let c2 = 1.0 - config.beta2.powi(*steps);
                for i in 0..params.len() {
                    let g = grads[i] + config.weight_decay * params[i];
                    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
                    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + config.eps);
                }
                Ok(())
            }
        }
    }
}

/// Learning rate as a function of the epoch index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    /// Cosine annealing restarted every `period` epochs, each cycle opening
    /// with a linear warmup of `warmup` epochs.
    CosineWarmRestart {
        period: u32,
        warmup: u32,
        min_lr: f64,
    },
    /// `base_lr * rate^epoch`; `rate = 1` gives a constant rate.
    ExponentialDecay { rate: f64 },
}

impl LrSchedule {
    pub fn cosine_default() -> Self {
        LrSchedule::CosineWarmRestart {
            period: 100,
            warmup: 5,
            min_lr: 0.0,
        }
    }

    pub fn exponential_default() -> Self {
        LrSchedule::ExponentialDecay { rate: 0.97 }
    }

    pub fn constant() -> Self {
        LrSchedule::ExponentialDecay { rate: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LrSchedule::CosineWarmRestart {
                period,
                warmup,
                min_lr,
            } => {
                if period == 0 || warmup >= period {
                    return Err(Error::InvalidArgument(format!(
                        "cosine schedule needs warmup < period, got warmup={warmup} period={period}"
                    )));
                }
                if min_lr.is_nan() || min_lr < 0.0 {
                    return Err(Error::InvalidArgument("min_lr must be >= 0".into()));
                }
            }
            LrSchedule::ExponentialDecay { rate } => {
                if !(rate > 0.0 && rate <= 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "decay rate must be in (0, 1], got {rate}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, base_lr: f64, epoch: u32) -> f64 {
        match *self {
            LrSchedule::CosineWarmRestart {
                period,
                warmup,
                min_lr,
            } => {
                let t = epoch % period;
                if t < warmup {
                    base_lr * f64::from(t + 1) / f64::from(warmup)
                } else {
                    let phase = f64::from(t - warmup) / f64::from(period - warmup);
                    min_lr + (base_lr - min_lr) * 0.5 * (1.0 + (PI * phase).cos())
                }
            }
            LrSchedule::ExponentialDecay { rate } => base_lr * rate.powf(f64::from(epoch)),
        }
    }
}
