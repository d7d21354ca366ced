use serde::{Deserialize, Serialize};

use super::{Accuracy, Dataset};
use crate::error::{KacError, Result};
use crate::heads::{ClassifierHead, Head, HeadSpec};
use crate::numerics::{softmax_in_place, Matrix, Rng};
use crate::optim::{Optimizer, OptimizerSpec};

fn default_head() -> HeadSpec {
    HeadSpec::kac_default()
}
fn default_lr() -> f64 {
    0.01
}
fn default_epochs() -> usize {
    20
}
fn default_batch() -> usize {
    32
}

/// Training settings for one run. Defaults: SGD with momentum 0.9,
/// lr 0.01, 20 epochs per task, batch 32, loss over every seen class,
/// frozen backbone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_head")]
    pub head: HeadSpec,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Restrict the softmax to the current task's classes.
    #[serde(default)]
    pub masked_loss: bool,
    /// Train an `n x n` affine map in front of the head, starting at the
    /// identity.
    #[serde(default)]
    pub trainable_backbone: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            head: default_head(),
            optimizer: OptimizerSpec::default(),
            lr: default_lr(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            seed: 0,
            masked_loss: false,
            trainable_backbone: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(KacError::param(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(KacError::param("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(KacError::param("batch size must be at least 1"));
        }
        self.optimizer.validate()
    }
}

/// Feature map in front of the head.
#[derive(Debug, Clone, PartialEq)]
pub enum Backbone {
    /// Stream features are used as they are.
    Frozen,
    /// `A f + a`, trained alongside the head.
    Linear { weights: Matrix, bias: Vec<f64> },
}

impl Backbone {
    pub fn trainable_identity(n: usize) -> Self {
        Backbone::Linear {
            weights: Matrix::identity(n),
            bias: vec![0.0; n],
        }
    }

    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        match self {
            Backbone::Frozen => Ok(f.to_vec()),
            Backbone::Linear { weights, bias } => {
                let mut out = weights.matvec(f)?;
                for (o, b) in out.iter_mut().zip(bias) {
                    *o += b;
                }
                Ok(out)
            }
        }
    }

    fn accumulate_grads(&self, f: &[f64], d_out: &[f64], acc: &mut [Vec<f64>]) {
        if let Backbone::Linear { weights, .. } = self {
            let n = weights.cols();
            for (r, &d) in d_out.iter().enumerate() {
                for (c, &x) in f.iter().enumerate() {
                    acc[0][r * n + c] += d * x;
                }
                acc[1][r] += d;
            }
        }
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Backbone::Frozen => Vec::new(),
            Backbone::Linear { weights, bias } => vec![weights.as_mut_slice(), &mut bias[..]],
        }
    }

    fn param_sizes(&self) -> Vec<usize> {
        match self {
            Backbone::Frozen => Vec::new(),
            Backbone::Linear { weights, bias } => vec![weights.as_slice().len(), bias.len()],
        }
    }
}

/// Backbone plus head.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub backbone: Backbone,
    pub head: ClassifierHead,
}

impl Model {
    pub fn logits(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.head.forward(&self.backbone.apply(f)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean cross-entropy of every minibatch, grouped by epoch.
    pub batch_losses: Vec<Vec<f64>>,
}

impl TrainLog {
    pub fn epoch_means(&self) -> Vec<f64> {
        self.batch_losses
            .iter()
            .map(|b| b.iter().sum::<f64>() / b.len().max(1) as f64)
            .collect()
    }
}

/// Minibatch softmax cross-entropy training on one task's training split.
///
/// The softmax covers every class the head currently has, or only
/// `class_ids` when `cfg.masked_loss` is set. A fresh optimizer state is
/// used for every call.
pub fn train_task(
    model: &mut Model,
    train: &Dataset,
    class_ids: &[usize],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainLog> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(KacError::param("training set is empty"));
    }
    let classes = model.head.num_classes();
    for &label in &train.labels {
        if label >= classes {
            return Err(KacError::Protocol(format!(
                "label {label} outside the head's {classes} classes"
            )));
        }
        if cfg.masked_loss && class_ids.binary_search(&label).is_err() {
            return Err(KacError::Protocol(format!(
                "label {label} not among the current task's classes"
            )));
        }
    }
    let active: Vec<usize> = if cfg.masked_loss {
        class_ids.to_vec()
    } else {
        (0..classes).collect()
    };

    let head_sizes: Vec<usize> = model.head.params().iter().map(|p| p.len()).collect();
    let backbone_sizes = model.backbone.param_sizes();
    let mut opt = Optimizer::new(cfg.optimizer.clone(), cfg.lr)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainLog::default();

    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_losses = Vec::new();
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut head_grads: Vec<Vec<f64>> = head_sizes.iter().map(|&s| vec![0.0; s]).collect();
            let mut backbone_grads: Vec<Vec<f64>> = backbone_sizes.iter().map(|&s| vec![0.0; s]).collect();
            let mut loss = 0.0;
            for &i in batch {
                let (f, label) = train.sample(i);
                let z = model.backbone.apply(f)?;
                let logits = model.head.forward(&z)?;
                let mut probs: Vec<f64> = active.iter().map(|&c| logits[c]).collect();
                softmax_in_place(&mut probs);
                let mut upstream = vec![0.0; classes];
                for (&c, &p) in active.iter().zip(&probs) {
                    let target = if c == label { 1.0 } else { 0.0 };
                    upstream[c] = (p - target) * scale;
                    if c == label {
                        loss -= p.max(f64::MIN_POSITIVE).ln() * scale;
                    }
                }
                let g = model.head.backward(&z, &upstream)?;
                for (acc, gi) in head_grads.iter_mut().zip(&g.params) {
                    for (a, v) in acc.iter_mut().zip(gi) {
                        *a += v;
                    }
                }
                model.backbone.accumulate_grads(f, &g.input, &mut backbone_grads);
            }
            head_grads.extend(backbone_grads);
            let mut params = model.head.params_mut();
            params.extend(model.backbone.params_mut());
            opt.step(params, &head_grads)?;
            if model.head.params().iter().any(|p| p.iter().any(|v| !v.is_finite())) {
                return Err(KacError::NonFinite("train_task"));
            }
            epoch_losses.push(loss);
        }
        log.batch_losses.push(epoch_losses);
    }
    Ok(log)
}

/// Argmax over the `seen` class ids (ascending), lowest id on ties.
pub fn predict(model: &Model, f: &[f64], seen: &[usize]) -> Result<usize> {
    let logits = model.logits(f)?;
    let mut best: Option<(usize, f64)> = None;
    for &c in seen {
        let v = *logits.get(c).ok_or_else(|| {
            KacError::Protocol(format!("class {c} not covered by a head with {} classes", logits.len()))
        })?;
        match best {
            Some((bc, bv)) if v < bv || (v == bv && bc < c) => {}
            _ => best = Some((c, v)),
        }
    }
    best.map(|(c, _)| c)
        .ok_or_else(|| KacError::param("no seen classes to predict from"))
}

/// Pooled accuracy over every sample of `sets`.
pub fn evaluate(model: &Model, sets: &[&Dataset], seen: &[usize]) -> Result<Accuracy> {
    pooled_accuracy(sets, |f| predict(model, f, seen))
}

pub(crate) fn pooled_accuracy<P>(sets: &[&Dataset], mut classify: P) -> Result<Accuracy>
where
    P: FnMut(&[f64]) -> Result<usize>,
{
    let mut acc = Accuracy { correct: 0, total: 0 };
    for set in sets {
        for i in 0..set.len() {
            let (f, label) = set.sample(i);
            acc.total += 1;
            if classify(f)? == label {
                acc.correct += 1;
            }
        }
    }
    if acc.total == 0 {
        return Err(KacError::param("cannot evaluate on an empty test set"));
    }
    Ok(acc)
}
