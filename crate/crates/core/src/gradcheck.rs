//! Central finite-difference verification of head gradients.
//!
//! The objective is `L = upstream · logits`, evaluated only through
//! [`Head::forward`]. Each trainable coordinate and each input coordinate
//! is perturbed by `±FD_STEP` and compared against the analytic gradient.

use std::fmt;

use crate::error::Result;
use crate::heads::{BsplineHead, ClassifierHead, Head, HeadGrads, KacHead, LayerNormParams, LinearHead, MlpHead};
use crate::basis::{BsplineBasis, RbfGrid};
use crate::numerics::{dot, Rng};

pub const FD_STEP: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-7;

/// Relative error with an absolute floor: differences at or below
/// `ABS_FLOOR` count as exact agreement.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= ABS_FLOOR {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coordinate {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub error: f64,
}

impl fmt::Display for Coordinate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}[{}]: analytic {:.9e} vs numeric {:.9e} (rel err {:.3e})",
            self.tensor, self.index, self.analytic, self.numeric, self.error
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradCheck {
    /// Largest floored relative error; this decides pass/fail.
    pub max_error: f64,
    /// Largest raw `|analytic - numeric|`, for information.
    pub max_abs_diff: f64,
    pub worst: Option<Coordinate>,
    pub coordinates: usize,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_error < REL_TOL
    }

    fn record(&mut self, tensor: &str, index: usize, analytic: f64, numeric: f64) {
        let error = relative_error(analytic, numeric);
        self.coordinates += 1;
        self.max_abs_diff = self.max_abs_diff.max((analytic - numeric).abs());
        if self.worst.is_none() || error > self.max_error {
            self.max_error = error;
            self.worst = Some(Coordinate {
                tensor: tensor.to_string(),
                index,
                analytic,
                numeric,
                error,
            });
        }
    }

    pub fn merge(&mut self, other: GradCheck) {
        self.coordinates += other.coordinates;
        self.max_abs_diff = self.max_abs_diff.max(other.max_abs_diff);
        if other.worst.is_some() && (self.worst.is_none() || other.max_error > self.max_error) {
            self.max_error = other.max_error;
            self.worst = other.worst;
        }
    }
}

fn objective<H: Head>(head: &H, f: &[f64], upstream: &[f64]) -> Result<f64> {
    Ok(dot(&head.forward(f)?, upstream))
}

/// Compares `analytic` against central differences of `upstream · logits`.
pub fn check_gradients<H: Head + Clone>(
    head: &H,
    f: &[f64],
    upstream: &[f64],
    analytic: &HeadGrads,
) -> Result<GradCheck> {
    let mut report = GradCheck::default();
    let names = head.param_names();
    let sizes: Vec<usize> = head.params().iter().map(|p| p.len()).collect();
    let mut probe = head.clone();
    for (t, &size) in sizes.iter().enumerate() {
        for i in 0..size {
            let orig = probe.params()[t][i];
            probe.params_mut()[t][i] = orig + FD_STEP;
            let up = objective(&probe, f, upstream)?;
            probe.params_mut()[t][i] = orig - FD_STEP;
            let down = objective(&probe, f, upstream)?;
            probe.params_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            report.record(names[t], i, analytic.params[t][i], numeric);
        }
    }
    let mut x = f.to_vec();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let up = objective(head, &x, upstream)?;
        x[i] = orig - FD_STEP;
        let down = objective(head, &x, upstream)?;
        x[i] = orig;
        report.record("input", i, analytic.input[i], (up - down) / (2.0 * FD_STEP));
    }
    Ok(report)
}

/// Head variants covered by the gradient suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadVariant {
    Kac,
    Bspline,
    BsplineResidual,
    Mlp,
    MlpFrozen,
    Linear,
}

impl HeadVariant {
    pub const ALL: [HeadVariant; 6] = [
        HeadVariant::Kac,
        HeadVariant::Bspline,
        HeadVariant::BsplineResidual,
        HeadVariant::Mlp,
        HeadVariant::MlpFrozen,
        HeadVariant::Linear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeadVariant::Kac => "kac",
            HeadVariant::Bspline => "bspline",
            HeadVariant::BsplineResidual => "bspline-residual",
            HeadVariant::Mlp => "mlp",
            HeadVariant::MlpFrozen => "mlp-fixed",
            HeadVariant::Linear => "linear",
        }
    }
}

fn expand_randomly<H: Head>(head: &mut H, rng: &mut Rng) -> Result<()> {
    let blocks = 1 + rng.below(3);
    for _ in 0..blocks {
        head.expand_classes(1 + rng.below(3), rng)?;
    }
    Ok(())
}

fn randomize_ln(ln: &mut LayerNormParams, rng: &mut Rng) {
    for g in ln.gain.iter_mut() {
        *g = rng.uniform(0.5, 1.5);
    }
    for b in ln.bias.iter_mut() {
        *b = rng.uniform(-0.5, 0.5);
    }
}

/// A random small head of the given variant, with a feature vector and an
/// upstream vector to differentiate against.
pub fn random_case(variant: HeadVariant, rng: &mut Rng) -> Result<(ClassifierHead, Vec<f64>, Vec<f64>)> {
    let n = 2 + rng.below(7);
    let head = match variant {
        HeadVariant::Kac => {
            let nb = 1 + rng.below(8);
            let sigma = rng.uniform(0.5, 1.5);
            let grid = RbfGrid::new(nb, -2.0, 2.0, sigma)?;
            let mut h = KacHead::new(n, grid, LayerNormParams::new(n, true));
            randomize_ln(h.layer_norm_mut(), rng);
            expand_randomly(&mut h, rng)?;
            ClassifierHead::Kac(h)
        }
        HeadVariant::Bspline | HeadVariant::BsplineResidual => {
            let degree = 2 + rng.below(2);
            let intervals = 1 + rng.below(5);
            let basis = BsplineBasis::uniform(degree, intervals, -2.0, 2.0)?;
            let residual = variant == HeadVariant::BsplineResidual;
            let mut h = BsplineHead::new(n, basis, LayerNormParams::new(n, true), residual);
            randomize_ln(h.layer_norm_mut(), rng);
            expand_randomly(&mut h, rng)?;
            ClassifierHead::Bspline(h)
        }
        HeadVariant::Mlp | HeadVariant::MlpFrozen => {
            let nb = 1 + rng.below(4);
            let mut h = MlpHead::new(n, nb * n, variant == HeadVariant::MlpFrozen, rng)?;
            expand_randomly(&mut h, rng)?;
            ClassifierHead::Mlp(h)
        }
        HeadVariant::Linear => {
            let mut h = LinearHead::new(n);
            expand_randomly(&mut h, rng)?;
            ClassifierHead::Linear(h)
        }
    };
    let f: Vec<f64> = (0..n).map(|_| 1.5 * rng.normal()).collect();
    let upstream: Vec<f64> = (0..head.num_classes()).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Ok((head, f, upstream))
}

/// Per-variant outcome of [`run_suite`].
#[derive(Debug, Clone)]
pub struct VariantResult {
    pub variant: HeadVariant,
    pub trials: usize,
    pub check: GradCheck,
}

/// Runs `trials` random cases for every variant. `corrupt`, when set,
/// perturbs the first analytic gradient entry of every case; it exists to
/// exercise the failure path.
pub fn run_suite(trials: usize, seed: u64, corrupt: bool) -> Result<Vec<VariantResult>> {
    let mut results = Vec::new();
    for (k, variant) in HeadVariant::ALL.into_iter().enumerate() {
        let mut rng = Rng::derive(seed, 0x6772_6164, k as u64);
        let mut total = GradCheck::default();
        for _ in 0..trials {
            let (head, f, upstream) = random_case(variant, &mut rng)?;
            let mut analytic = head.backward(&f, &upstream)?;
            if corrupt {
                let g = &mut analytic.params[0][0];
                *g = *g * 1.5 + 1e-3;
            }
            total.merge(check_gradients(&head, &f, &upstream, &analytic)?);
        }
        results.push(VariantResult {
            variant,
            trials,
            check: total,
        });
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1e-9, 2e-9), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let results = run_suite(1, 0, true).unwrap();
        for r in results {
            assert!(!r.check.passed(), "{} should fail", r.variant.name());
            let worst = r.check.worst.unwrap();
            assert_eq!(worst.index, 0);
        }
    }

    #[test]
    fn every_variant_passes_small_suite() {
        for r in run_suite(3, 1, false).unwrap() {
            assert!(r.check.passed(), "{}: {:?}", r.variant.name(), r.check.worst);
        }
    }
}
