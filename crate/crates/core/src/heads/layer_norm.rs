//! Layer normalization over a single feature vector.

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{KacError, Result};

/// `y = gain * (x - mean) / sqrt(var + epsilon) + bias` with population
/// variance. With `affine` off the gain/bias are ignored and not trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNormParams {
    pub epsilon: f64,
    pub affine: bool,
    #[serde(with = "codec::f64_vec")]
    pub gain: Vec<f64>,
    #[serde(with = "codec::f64_vec")]
    pub bias: Vec<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: f64,
    pub output: Vec<f64>,
}

impl LayerNormParams {
    pub const DEFAULT_EPSILON: f64 = 1e-5;

    pub fn new(n: usize, affine: bool) -> Self {
        LayerNormParams {
            epsilon: Self::DEFAULT_EPSILON,
            affine,
            gain: vec![1.0; n],
            bias: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.gain.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(KacError::param("layer-norm epsilon must be positive"));
        }
        if self.gain.is_empty() {
            return Err(KacError::param("layer-norm dimension must be at least 1"));
        }
        if self.gain.len() != self.bias.len() {
            return Err(KacError::dim(
                "LayerNormParams",
                format!("gain of length {}", self.gain.len()),
                format!("bias of length {}", self.bias.len()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<LayerNormCache> {
        let n = self.dim();
        if x.len() != n {
            return Err(KacError::dim(
                "layer_norm",
                format!("dimension {n}"),
                format!("input of length {}", x.len()),
            ));
        }
        let nf = n as f64;
        let mean = x.iter().sum::<f64>() / nf;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
        let inv_std = 1.0 / (var + self.epsilon).sqrt();
        let normalized: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
        let output = if self.affine {
            normalized
                .iter()
                .zip(&self.gain)
                .zip(&self.bias)
                .map(|((z, g), b)| g * z + b)
                .collect()
        } else {
            normalized.clone()
        };
        Ok(LayerNormCache {
            normalized,
            inv_std,
            output,
        })
    }

    /// Returns `(d_gain, d_bias, d_x)`; the affine gradients are zero when
    /// affine is disabled.
    pub fn backward(&self, cache: &LayerNormCache, d_out: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let nf = n as f64;
        let mut d_gain = vec![0.0; n];
        let mut d_bias = vec![0.0; n];
        let d_norm: Vec<f64> = if self.affine {
            for p in 0..n {
                d_gain[p] = d_out[p] * cache.normalized[p];
                d_bias[p] = d_out[p];
            }
            d_out.iter().zip(&self.gain).map(|(d, g)| d * g).collect()
        } else {
            d_out.to_vec()
        };
        let mean_d = d_norm.iter().sum::<f64>() / nf;
        let mean_dz = d_norm
            .iter()
            .zip(&cache.normalized)
            .map(|(d, z)| d * z)
            .sum::<f64>()
            / nf;
        let d_x = d_norm
            .iter()
            .zip(&cache.normalized)
            .map(|(d, z)| cache.inv_std * (d - mean_d - z * mean_dz))
            .collect();
        (d_gain, d_bias, d_x)
    }
}

pub fn layer_norm(ln: &LayerNormParams, x: &[f64]) -> Result<Vec<f64>> {
    Ok(ln.forward(x)?.output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn two_point_example() {
        let ln = LayerNormParams::new(2, true);
        let y = layer_norm(&ln, &[1.0, -1.0]).unwrap();
        let expected = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y[0] - expected).abs() < 1e-15 && (y[1] + expected).abs() < 1e-15);
        assert!((y[0] - 0.999995).abs() < 1e-6);
    }

    #[test]
    fn constant_input_maps_to_bias() {
        let mut ln = LayerNormParams::new(3, true);
        ln.bias = vec![0.5, -1.0, 2.0];
        assert_eq!(layer_norm(&ln, &[4.0, 4.0, 4.0]).unwrap(), vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn output_is_centered() {
        let ln = LayerNormParams::new(8, false);
        let mut rng = Rng::new(9);
        for _ in 0..20 {
            let x: Vec<f64> = (0..8).map(|_| 5.0 * rng.normal() + 3.0).collect();
            let cache = ln.forward(&x).unwrap();
            let mean = cache.normalized.iter().sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(LayerNormParams::new(3, true).forward(&[1.0]).is_err());
    }
}
