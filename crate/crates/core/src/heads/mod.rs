//! Classification heads with exact forward/backward passes and
//! class-incremental expansion.
//!
//! Every head maps an `n`-dimensional feature vector to one logit per
//! class seen so far. Classes arrive in blocks (one per task); expansion
//! appends rows for the new block and never touches existing rows, so old
//! logits are bit-identical before and after.

mod bspline;
mod kac;
mod layer_norm;
mod linear;
mod mlp;

use serde::{Deserialize, Serialize};

pub use bspline::BsplineHead;
pub use kac::{activation_map, kac_forward_factored, FactoredKacWeights, KacGrads, KacHead};
pub use layer_norm::{layer_norm, LayerNormCache, LayerNormParams};
pub use linear::LinearHead;
pub use mlp::MlpHead;

use crate::error::{KacError, Result};
use crate::numerics::{rand_uniform, Matrix, Rng};

/// Gradients of `upstream · logits`.
///
/// `params[k]` lines up with `Head::params()[k]`; `input` is the gradient
/// with respect to the feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub params: Vec<Vec<f64>>,
    pub input: Vec<f64>,
}

pub trait Head {
    fn input_dim(&self) -> usize;

    fn num_classes(&self) -> usize;

    /// Class counts per expansion, in order.
    fn task_blocks(&self) -> &[usize];

    fn forward(&self, f: &[f64]) -> Result<Vec<f64>>;

    fn backward(&self, f: &[f64], upstream: &[f64]) -> Result<HeadGrads>;

    /// Trainable tensors, flattened row-major.
    fn params(&self) -> Vec<&[f64]>;

    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_names(&self) -> Vec<&'static str>;

    /// Appends `new_classes` output rows.
    fn expand_classes(&mut self, new_classes: usize, rng: &mut Rng) -> Result<()>;

    /// Every stored parameter, trainable or frozen.
    fn parameter_count(&self) -> usize;
}

/// `rows x fan_in` block drawn uniform on `(-a, a)`, `a = 1/sqrt(fan_in)`.
pub(crate) fn init_rows(rng: &mut Rng, rows: usize, fan_in: usize) -> Result<Matrix> {
    let a = 1.0 / (fan_in.max(1) as f64).sqrt();
    rand_uniform(rng, rows, fan_in, -a, a)
}

pub(crate) fn check_expand(new_classes: usize) -> Result<()> {
    if new_classes == 0 {
        return Err(KacError::param("expand_classes needs at least one new class"));
    }
    Ok(())
}

pub(crate) fn check_input(op: &'static str, n: usize, f: &[f64]) -> Result<()> {
    if f.len() != n {
        return Err(KacError::dim(
            op,
            format!("input dimension {n}"),
            format!("feature of length {}", f.len()),
        ));
    }
    Ok(())
}

pub(crate) fn check_upstream(op: &'static str, classes: usize, upstream: &[f64]) -> Result<()> {
    if upstream.len() != classes {
        return Err(KacError::dim(
            op,
            format!("{classes} classes"),
            format!("upstream of length {}", upstream.len()),
        ));
    }
    Ok(())
}

/// Any of the supported heads, as stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassifierHead {
    Kac(KacHead),
    Bspline(BsplineHead),
    Mlp(MlpHead),
    Linear(LinearHead),
}

macro_rules! delegate {
    ($self:ident, $h:ident => $e:expr) => {
        match $self {
            ClassifierHead::Kac($h) => $e,
            ClassifierHead::Bspline($h) => $e,
            ClassifierHead::Mlp($h) => $e,
            ClassifierHead::Linear($h) => $e,
        }
    };
}

impl ClassifierHead {
    pub fn validate(&self) -> Result<()> {
        delegate!(self, h => h.validate())
    }

    pub fn as_kac(&self) -> Option<&KacHead> {
        match self {
            ClassifierHead::Kac(h) => Some(h),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ClassifierHead::Kac(_) => "kac",
            ClassifierHead::Bspline(_) => "bspline",
            ClassifierHead::Mlp(_) => "mlp",
            ClassifierHead::Linear(_) => "linear",
        }
    }
}

impl Head for ClassifierHead {
    fn input_dim(&self) -> usize {
        delegate!(self, h => h.input_dim())
    }
    fn num_classes(&self) -> usize {
        delegate!(self, h => h.num_classes())
    }
    fn task_blocks(&self) -> &[usize] {
        delegate!(self, h => h.task_blocks())
    }
    fn forward(&self, f: &[f64]) -> Result<Vec<f64>> {
        delegate!(self, h => h.forward(f))
    }
    fn backward(&self, f: &[f64], upstream: &[f64]) -> Result<HeadGrads> {
        delegate!(self, h => Head::backward(h, f, upstream))
    }
    fn params(&self) -> Vec<&[f64]> {
        delegate!(self, h => h.params())
    }
    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        delegate!(self, h => h.params_mut())
    }
    fn param_names(&self) -> Vec<&'static str> {
        delegate!(self, h => h.param_names())
    }
    fn expand_classes(&mut self, new_classes: usize, rng: &mut Rng) -> Result<()> {
        delegate!(self, h => h.expand_classes(new_classes, rng))
    }
    fn parameter_count(&self) -> usize {
        delegate!(self, h => h.parameter_count())
    }
}

fn default_num_basis() -> usize {
    4
}
fn default_lo() -> f64 {
    -2.0
}
fn default_hi() -> f64 {
    2.0
}
fn default_sigma() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_degree() -> usize {
    3
}
fn default_intervals() -> usize {
    1
}

/// Head configuration as it appears in experiment configs.
///
/// Defaults: KAC uses 4 Gaussians on `[-2, 2]` with `sigma = 1`; the
/// B-spline head uses cubic splines with one interval on `[-2, 2]`, which
/// gives 4 functions per channel and so the same weight count as KAC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HeadSpec {
    Kac {
        #[serde(default = "default_num_basis")]
        num_basis: usize,
        #[serde(default = "default_lo")]
        lo: f64,
        #[serde(default = "default_hi")]
        hi: f64,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "default_true")]
        layer_norm_affine: bool,
    },
    Linear,
    Bspline {
        #[serde(default = "default_degree")]
        degree: usize,
        #[serde(default = "default_intervals")]
        intervals: usize,
        #[serde(default = "default_lo")]
        lo: f64,
        #[serde(default = "default_hi")]
        hi: f64,
        #[serde(default)]
        residual: bool,
        #[serde(default = "default_true")]
        layer_norm_affine: bool,
    },
    Mlp {
        #[serde(default = "default_num_basis")]
        num_basis: usize,
        #[serde(default)]
        frozen: bool,
    },
}

impl HeadSpec {
    pub fn kac_default() -> Self {
        HeadSpec::Kac {
            num_basis: default_num_basis(),
            lo: default_lo(),
            hi: default_hi(),
            sigma: default_sigma(),
            layer_norm_affine: true,
        }
    }

    pub fn bspline_default(residual: bool) -> Self {
        HeadSpec::Bspline {
            degree: default_degree(),
            intervals: default_intervals(),
            lo: default_lo(),
            hi: default_hi(),
            residual,
            layer_norm_affine: true,
        }
    }

    /// Short identifier used in file names and summary rows.
    pub fn label(&self) -> String {
        match self {
            HeadSpec::Kac { num_basis, .. } => format!("kac-n{num_basis}"),
            HeadSpec::Linear => "linear".to_string(),
            HeadSpec::Bspline {
                degree,
                intervals,
                residual,
                ..
            } => {
                let g = intervals + degree;
                if *residual {
                    format!("bspline-res-p{degree}-g{g}")
                } else {
                    format!("bspline-p{degree}-g{g}")
                }
            }
            HeadSpec::Mlp { num_basis, frozen } => {
                if *frozen {
                    format!("mlp-fixed-n{num_basis}")
                } else {
                    format!("mlp-n{num_basis}")
                }
            }
        }
    }

    /// A head with no classes yet, for `n`-dimensional features.
    pub fn build(&self, n: usize, rng: &mut Rng) -> Result<ClassifierHead> {
        if n == 0 {
            return Err(KacError::param("feature dimension must be at least 1"));
        }
        Ok(match self {
            HeadSpec::Kac {
                num_basis,
                lo,
                hi,
                sigma,
                layer_norm_affine,
            } => {
                let grid = crate::basis::RbfGrid::new(*num_basis, *lo, *hi, *sigma)?;
                ClassifierHead::Kac(KacHead::new(n, grid, LayerNormParams::new(n, *layer_norm_affine)))
            }
            HeadSpec::Linear => ClassifierHead::Linear(LinearHead::new(n)),
            HeadSpec::Bspline {
                degree,
                intervals,
                lo,
                hi,
                residual,
                layer_norm_affine,
            } => {
                let basis = crate::basis::BsplineBasis::uniform(*degree, *intervals, *lo, *hi)?;
                ClassifierHead::Bspline(BsplineHead::new(
                    n,
                    basis,
                    LayerNormParams::new(n, *layer_norm_affine),
                    *residual,
                ))
            }
            HeadSpec::Mlp { num_basis, frozen } => {
                if *num_basis == 0 {
                    return Err(KacError::param("MLP hidden multiplier must be at least 1"));
                }
                ClassifierHead::Mlp(MlpHead::new(n, num_basis * n, *frozen, rng)?)
            }
        })
    }
}
