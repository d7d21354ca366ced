//! Sequential 1D regression over Gaussian peaks.
//!
//! The domain is cut into equal intervals; task `k` only sees samples from
//! interval `k`, whose target is a single peak centered in it. Two
//! parameter-matched regressors are compared: one RBF unit
//! (`y = sum_k w_k phi_k(x)` with fixed centers over the whole domain) and
//! a one-hidden-layer SiLU MLP.

use serde::{Deserialize, Serialize};

use crate::basis::{silu, silu_grad, RbfGrid};
use crate::error::{KacError, Result};
use crate::numerics::Rng;
use crate::optim::{Optimizer, OptimizerSpec};

const TAG_PEAK_GRID: u64 = 0x7065_616b;
const TAG_MLP_INIT: u64 = 0x6d6c_7069;

/// Centers farther than this many basis widths from a task's interval
/// count as "outside" for the locality measurement.
pub const LOCALITY_WIDTHS: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakTask {
    pub lo: f64,
    pub hi: f64,
    pub mu: f64,
    pub width: f64,
    pub amplitude: f64,
    pub train_x: Vec<f64>,
    pub test_x: Vec<f64>,
}

impl PeakTask {
    pub fn target(&self, x: f64) -> f64 {
        let d = (x - self.mu) / self.width;
        self.amplitude * (-0.5 * d * d).exp()
    }
}

/// `num_peaks` equal intervals over `[lo, hi]`, one unit-amplitude peak of
/// width `interval / 6` centered in each. Training points are one jittered
/// draw per stratum (the only use of `seed`); test points are the
/// `test_points` stratum midpoints.
pub fn make_peaks(
    num_peaks: usize,
    lo: f64,
    hi: f64,
    train_points: usize,
    test_points: usize,
    seed: u64,
) -> Result<Vec<PeakTask>> {
    if num_peaks == 0 || train_points == 0 || test_points == 0 {
        return Err(KacError::param("peak count and grid sizes must be at least 1"));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(KacError::param(format!("invalid peak domain [{lo}, {hi}]")));
    }
    let len = (hi - lo) / num_peaks as f64;
    Ok((0..num_peaks)
        .map(|k| {
            let a = lo + len * k as f64;
            let b = if k + 1 == num_peaks { hi } else { lo + len * (k + 1) as f64 };
            let mut rng = Rng::derive(seed, TAG_PEAK_GRID, k as u64);
            let step = (b - a) / train_points as f64;
            let train_x = (0..train_points)
                .map(|i| a + step * (i as f64 + rng.uniform(0.0, 1.0)))
                .collect();
            let tstep = (b - a) / test_points as f64;
            let test_x = (0..test_points).map(|i| a + tstep * (i as f64 + 0.5)).collect();
            PeakTask {
                lo: a,
                hi: b,
                mu: 0.5 * (a + b),
                width: (b - a) / 6.0,
                amplitude: 1.0,
                train_x,
                test_x,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressorKind {
    RbfUnit,
    MlpUnit,
}

impl RegressorKind {
    pub fn name(&self) -> &'static str {
        match self {
            RegressorKind::RbfUnit => "rbf-unit",
            RegressorKind::MlpUnit => "mlp-unit",
        }
    }
}

fn d_peaks() -> usize {
    5
}
fn d_lo() -> f64 {
    -1.0
}
fn d_hi() -> f64 {
    1.0
}
fn d_train() -> usize {
    40
}
fn d_test() -> usize {
    50
}
fn d_basis() -> usize {
    61
}
fn d_hidden() -> usize {
    20
}
fn d_steps() -> usize {
    20000
}
fn d_rbf_lr() -> f64 {
    0.01
}
fn d_mlp_lr() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeaksConfig {
    #[serde(default = "d_peaks")]
    pub num_peaks: usize,
    #[serde(default = "d_lo")]
    pub lo: f64,
    #[serde(default = "d_hi")]
    pub hi: f64,
    #[serde(default = "d_train")]
    pub train_points: usize,
    #[serde(default = "d_test")]
    pub test_points: usize,
    /// Basis functions of the RBF unit, evenly spaced over `[lo, hi]`
    /// with width equal to their spacing.
    #[serde(default = "d_basis")]
    pub rbf_basis: usize,
    /// Hidden width of the MLP unit; `3 * hidden + 1` parameters.
    #[serde(default = "d_hidden")]
    pub mlp_hidden: usize,
    /// Full-batch Adam steps per task.
    #[serde(default = "d_steps")]
    pub steps_per_task: usize,
    #[serde(default = "d_rbf_lr")]
    pub rbf_lr: f64,
    #[serde(default = "d_mlp_lr")]
    pub mlp_lr: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PeaksConfig {
    fn default() -> Self {
        PeaksConfig {
            num_peaks: d_peaks(),
            lo: d_lo(),
            hi: d_hi(),
            train_points: d_train(),
            test_points: d_test(),
            rbf_basis: d_basis(),
            mlp_hidden: d_hidden(),
            steps_per_task: d_steps(),
            rbf_lr: d_rbf_lr(),
            mlp_lr: d_mlp_lr(),
            seed: 0,
        }
    }
}

impl PeaksConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rbf_basis < 2 || self.mlp_hidden == 0 || self.steps_per_task == 0 {
            return Err(KacError::param("peaks: need >= 2 basis functions, >= 1 hidden unit and >= 1 step"));
        }
        if !(self.rbf_lr > 0.0) || !(self.mlp_lr > 0.0) {
            return Err(KacError::param("peaks: learning rates must be positive"));
        }
        Ok(())
    }
}

/// Gradient magnitudes seen by the RBF unit during one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityRecord {
    pub task: usize,
    /// Weights whose center is more than [`LOCALITY_WIDTHS`] widths away
    /// from the task interval.
    pub outside_weights: usize,
    pub max_outside_grad: f64,
    pub max_grad: f64,
    /// `max_outside_grad / max_grad`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeaksOutcome {
    pub kind: RegressorKind,
    pub seed: u64,
    pub parameter_count: usize,
    /// `rmse[t][k]`: error on peak `k`'s test grid after task `t`, `k <= t`.
    pub rmse: Vec<Vec<f64>>,
    /// One record per task; empty for the MLP unit.
    pub locality: Vec<LocalityRecord>,
}

impl PeaksOutcome {
    /// Final errors on every peak except the last one trained.
    pub fn previous_peaks_rmse(&self) -> &[f64] {
        let last = self.rmse.last().map(Vec::as_slice).unwrap_or(&[]);
        &last[..last.len().saturating_sub(1)]
    }
}

trait Regressor {
    fn params_mut(&mut self) -> Vec<&mut [f64]>;
    fn predict(&self, x: f64) -> f64;
    /// Mean-squared-error gradient over `(x, y)` pairs, one vector per
    /// tensor in `params_mut` order.
    fn grads(&self, xs: &[f64], ys: &[f64]) -> Vec<Vec<f64>>;
    fn parameter_count(&self) -> usize;
}

struct RbfUnit {
    grid: RbfGrid,
    weights: Vec<f64>,
}

impl RbfUnit {
    fn new(k: usize, lo: f64, hi: f64) -> Result<Self> {
        let spacing = (hi - lo) / (k - 1) as f64;
        Ok(RbfUnit {
            grid: RbfGrid::new(k, lo, hi, spacing)?,
            weights: vec![0.0; k],
        })
    }
}

impl Regressor for RbfUnit {
    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weights[..]]
    }

    fn predict(&self, x: f64) -> f64 {
        self.grid.eval(x).iter().zip(&self.weights).map(|(p, w)| p * w).sum()
    }

    fn grads(&self, xs: &[f64], ys: &[f64]) -> Vec<Vec<f64>> {
        let scale = 2.0 / xs.len() as f64;
        let mut g = vec![0.0; self.weights.len()];
        for (&x, &y) in xs.iter().zip(ys) {
            let phi = self.grid.eval(x);
            let r = scale * (phi.iter().zip(&self.weights).map(|(p, w)| p * w).sum::<f64>() - y);
            for (gi, p) in g.iter_mut().zip(&phi) {
                *gi += r * p;
            }
        }
        vec![g]
    }

    fn parameter_count(&self) -> usize {
        self.weights.len()
    }
}

struct MlpUnit {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl MlpUnit {
    /// Default-style init: first layer `U(-1, 1)` (fan-in 1), second layer
    /// `U(-1/sqrt(h), 1/sqrt(h))`.
    fn new(h: usize, rng: &mut Rng) -> Self {
        let b = 1.0 / (h as f64).sqrt();
        MlpUnit {
            w1: (0..h).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            b1: (0..h).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            w2: (0..h).map(|_| rng.uniform(-b, b)).collect(),
            b2: vec![rng.uniform(-b, b)],
        }
    }
}

impl Regressor for MlpUnit {
    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w1[..], &mut self.b1[..], &mut self.w2[..], &mut self.b2[..]]
    }

    fn predict(&self, x: f64) -> f64 {
        self.b2[0]
            + self
                .w1
                .iter()
                .zip(&self.b1)
                .zip(&self.w2)
                .map(|((a, b), c)| c * silu(a * x + b))
                .sum::<f64>()
    }

    fn grads(&self, xs: &[f64], ys: &[f64]) -> Vec<Vec<f64>> {
        let h = self.w1.len();
        let scale = 2.0 / xs.len() as f64;
        let (mut gw1, mut gb1, mut gw2, mut gb2) = (vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0]);
        for (&x, &y) in xs.iter().zip(ys) {
            let r = scale * (self.predict(x) - y);
            gb2[0] += r;
            for j in 0..h {
                let pre = self.w1[j] * x + self.b1[j];
                gw2[j] += r * silu(pre);
                let d = r * self.w2[j] * silu_grad(pre);
                gw1[j] += d * x;
                gb1[j] += d;
            }
        }
        vec![gw1, gb1, gw2, gb2]
    }

    fn parameter_count(&self) -> usize {
        3 * self.w1.len() + 1
    }
}

fn rmse(model: &dyn Regressor, task: &PeakTask) -> f64 {
    let sq: f64 = task
        .test_x
        .iter()
        .map(|&x| (model.predict(x) - task.target(x)).powi(2))
        .sum();
    (sq / task.test_x.len() as f64).sqrt()
}

fn adam() -> OptimizerSpec {
    OptimizerSpec::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    }
}

/// Trains the chosen regressor on each peak in turn (full-batch Adam,
/// fresh optimizer state per task) and records test RMSE on every peak
/// seen so far after each task. For the RBF unit the gradient of every
/// weight is captured at every step to measure locality.
pub fn run_peaks_experiment(kind: RegressorKind, cfg: &PeaksConfig) -> Result<PeaksOutcome> {
    cfg.validate()?;
    let tasks = make_peaks(cfg.num_peaks, cfg.lo, cfg.hi, cfg.train_points, cfg.test_points, cfg.seed)?;
    let mut rbf;
    let mut mlp;
    let (model, lr): (&mut dyn Regressor, f64) = match kind {
        RegressorKind::RbfUnit => {
            rbf = RbfUnit::new(cfg.rbf_basis, cfg.lo, cfg.hi)?;
            (&mut rbf, cfg.rbf_lr)
        }
        RegressorKind::MlpUnit => {
            mlp = MlpUnit::new(cfg.mlp_hidden, &mut Rng::derive(cfg.seed, TAG_MLP_INIT, 0));
            (&mut mlp, cfg.mlp_lr)
        }
    };
    let basis = match kind {
        RegressorKind::RbfUnit => {
            let spacing = (cfg.hi - cfg.lo) / (cfg.rbf_basis - 1) as f64;
            Some((RbfGrid::new(cfg.rbf_basis, cfg.lo, cfg.hi, spacing)?, spacing))
        }
        RegressorKind::MlpUnit => None,
    };

    let mut table = Vec::with_capacity(tasks.len());
    let mut locality = Vec::new();
    for (t, task) in tasks.iter().enumerate() {
        let ys: Vec<f64> = task.train_x.iter().map(|&x| task.target(x)).collect();
        let outside: Vec<bool> = basis
            .as_ref()
            .map(|(grid, width)| {
                grid.centers()
                    .iter()
                    .map(|&c| (task.lo - c).max(c - task.hi) > LOCALITY_WIDTHS * width)
                    .collect()
            })
            .unwrap_or_default();
        let (mut max_out, mut max_all) = (0.0f64, 0.0f64);
        let mut opt = Optimizer::new(adam(), lr)?;
        for _ in 0..cfg.steps_per_task {
            let g = model.grads(&task.train_x, &ys);
            if !outside.is_empty() {
                for (gi, &out) in g[0].iter().zip(&outside) {
                    max_all = max_all.max(gi.abs());
                    if out {
                        max_out = max_out.max(gi.abs());
                    }
                }
            }
            opt.step(model.params_mut(), &g)?;
        }
        if !outside.is_empty() {
            locality.push(LocalityRecord {
                task: t,
                outside_weights: outside.iter().filter(|&&o| o).count(),
                max_outside_grad: max_out,
                max_grad: max_all,
                ratio: if max_all > 0.0 { max_out / max_all } else { 0.0 },
            });
        }
        let row: Vec<f64> = tasks[..=t].iter().map(|k| rmse(&*model, k)).collect();
        if row.iter().any(|v| !v.is_finite()) {
            return Err(KacError::NonFinite("run_peaks_experiment"));
        }
        table.push(row);
    }
    Ok(PeaksOutcome {
        kind,
        seed: cfg.seed,
        parameter_count: model.parameter_count(),
        rmse: table,
        locality,
    })
}
