//! First-order optimizers over a list of flat parameter tensors.

use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};

fn default_momentum() -> f64 {
    0.9
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OptimizerSpec {
    /// `v = momentum * v + g; p -= lr * v`.
    Sgd {
        #[serde(default = "default_momentum")]
        momentum: f64,
    },
    /// Adam with bias correction.
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec::Sgd {
            momentum: default_momentum(),
        }
    }
}

impl OptimizerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OptimizerSpec::Sgd { momentum } if !(0.0..1.0).contains(&momentum) => {
                Err(KacError::param(format!("momentum {momentum} outside [0, 1)")))
            }
            OptimizerSpec::Adam { beta1, beta2, eps }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) =>
            {
                Err(KacError::param("Adam needs betas in [0, 1) and eps > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Optimizer state for one fixed set of tensors. Create a fresh one when
/// the tensor shapes change (e.g. after a head expansion).
#[derive(Debug, Clone)]
pub struct Optimizer {
    spec: OptimizerSpec,
    lr: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec, lr: f64) -> Result<Self> {
        spec.validate()?;
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(KacError::param(format!("learning rate must be positive, got {lr}")));
        }
        Ok(Optimizer {
            spec,
            lr,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        })
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(KacError::dim(
                "Optimizer::step",
                format!("{} tensors", params.len()),
                format!("{} gradients", grads.len()),
            ));
        }
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second = self.first.clone();
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || self.first.get(k).map(Vec::len) != Some(g.len()) {
                return Err(KacError::dim(
                    "Optimizer::step",
                    format!("tensor {k} of length {}", p.len()),
                    format!("gradient of length {}", g.len()),
                ));
            }
        }
        self.steps += 1;
        let lr = self.lr;
        match self.spec {
            OptimizerSpec::Sgd { momentum } => {
                for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.first) {
                    for ((pi, gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                        *vi = momentum * *vi + gi;
                        *pi -= lr * *vi;
                    }
                }
            }
            OptimizerSpec::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), s) in params
                    .into_iter()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for (((pi, gi), mi), si) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(s.iter_mut()) {
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *si = beta2 * *si + (1.0 - beta2) * gi * gi;
                        *pi -= lr * (*mi / c1) / ((*si / c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
