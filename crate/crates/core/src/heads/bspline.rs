//! Single-layer B-spline KAN head used for the spline ablation.
//!
//! `logits = S · vec(B(LN(f))) + R · silu(LN(f))` where `B` evaluates the
//! spline basis per channel (flattened `p * G + g`) and the residual term
//! `R` is present only when enabled.

use serde::{Deserialize, Serialize};

use super::{check_expand, check_input, check_upstream, init_rows, Head, HeadGrads, LayerNormParams};
use crate::basis::{silu, silu_grad, BsplineBasis};
use crate::error::{KacError, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsplineHead {
    n: usize,
    basis: BsplineBasis,
    ln: LayerNormParams,
    spline_weights: Matrix,
    residual_weights: Option<Matrix>,
    task_blocks: Vec<usize>,
}

impl BsplineHead {
    pub fn new(n: usize, basis: BsplineBasis, ln: LayerNormParams, residual: bool) -> Self {
        let cols = basis.len() * n;
        BsplineHead {
            n,
            basis,
            ln,
            spline_weights: Matrix::zeros(0, cols),
            residual_weights: residual.then(|| Matrix::zeros(0, n)),
            task_blocks: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.basis.validate()?;
        self.ln.validate()?;
        let classes: usize = self.task_blocks.iter().sum();
        let expected = (classes, self.basis.len() * self.n);
        if self.ln.dim() != self.n || self.spline_weights.shape() != expected {
            return Err(KacError::dim(
                "BsplineHead",
                format!("spline weights {}x{}", expected.0, expected.1),
                format!("{}x{}", self.spline_weights.rows(), self.spline_weights.cols()),
            ));
        }
        if let Some(r) = &self.residual_weights {
            if r.shape() != (classes, self.n) {
                return Err(KacError::dim(
                    "BsplineHead",
                    format!("residual weights {}x{}", classes, self.n),
                    format!("{}x{}", r.rows(), r.cols()),
                ));
            }
        }
        Ok(())
    }

    pub fn residual_enabled(&self) -> bool {
        self.residual_weights.is_some()
    }

    pub fn spline_weights_mut(&mut self) -> &mut Matrix {
        &mut self.spline_weights
    }

    pub fn residual_weights_mut(&mut self) -> Option<&mut Matrix> {
        self.residual_weights.as_mut()
    }

    pub fn layer_norm_mut(&mut self) -> &mut LayerNormParams {
        &mut self.ln
    }

    fn spline_features(&self, x: &[f64]) -> Vec<f64> {
        let g = self.basis.len();
        let mut out = Vec::with_capacity(g * x.len());
        for &v in x {
            out.extend(self.basis.eval(v));
        }
        out
    }

    pub fn forward(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_input("bspline_forward", self.n, f)?;
        let x = self.ln.forward(f)?.output;
        let mut logits = self.spline_weights.matvec(&self.spline_features(&x))?;
        if let Some(r) = &self.residual_weights {
            let act: Vec<f64> = x.iter().map(|v| silu(*v)).collect();
            for (l, v) in logits.iter_mut().zip(r.matvec(&act)?) {
                *l += v;
            }
        }
        Ok(logits)
    }

    pub fn backward(&self, f: &[f64], upstream: &[f64]) -> Result<HeadGrads> {
        check_input("bspline_backward", self.n, f)?;
        let classes = self.spline_weights.rows();
        check_upstream("bspline_backward", classes, upstream)?;
        let g = self.basis.len();
        let cache = self.ln.forward(f)?;
        let x = &cache.output;
        let feats = self.spline_features(x);

        let mut d_spline = Matrix::zeros(classes, feats.len());
        let mut d_feats = vec![0.0; feats.len()];
        for c in 0..classes {
            let u = upstream[c];
            for (j, (dw, w)) in d_spline
                .row_mut(c)
                .iter_mut()
                .zip(self.spline_weights.row(c))
                .enumerate()
            {
                *dw = u * feats[j];
                d_feats[j] += u * w;
            }
        }
        let mut d_x: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(p, &v)| {
                self.basis
                    .grad(v)
                    .iter()
                    .zip(&d_feats[p * g..(p + 1) * g])
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();

        let mut params = vec![d_spline.into_vec()];
        if let Some(r) = &self.residual_weights {
            let act: Vec<f64> = x.iter().map(|v| silu(*v)).collect();
            let mut d_res = Matrix::zeros(classes, self.n);
            for c in 0..classes {
                let u = upstream[c];
                for (p, dw) in d_res.row_mut(c).iter_mut().enumerate() {
                    *dw = u * act[p];
                    d_x[p] += u * r.get(c, p) * silu_grad(x[p]);
                }
            }
            params.push(d_res.into_vec());
        }
        let (d_gain, d_bias, d_input) = self.ln.backward(&cache, &d_x);
        if self.ln.affine {
            params.push(d_gain);
            params.push(d_bias);
        }
        Ok(HeadGrads {
            params,
            input: d_input,
        })
    }
}

impl Head for BsplineHead {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn num_classes(&self) -> usize {
        self.spline_weights.rows()
    }

    fn task_blocks(&self) -> &[usize] {
        &self.task_blocks
    }

    fn forward(&self, f: &[f64]) -> Result<Vec<f64>> {
        BsplineHead::forward(self, f)
    }

    fn backward(&self, f: &[f64], upstream: &[f64]) -> Result<HeadGrads> {
        BsplineHead::backward(self, f, upstream)
    }

    fn params(&self) -> Vec<&[f64]> {
        let mut out = vec![self.spline_weights.as_slice()];
        if let Some(r) = &self.residual_weights {
            out.push(r.as_slice());
        }
        if self.ln.affine {
            out.push(&self.ln.gain);
            out.push(&self.ln.bias);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.spline_weights.as_mut_slice()];
        if let Some(r) = &mut self.residual_weights {
            out.push(r.as_mut_slice());
        }
        if self.ln.affine {
            out.push(&mut self.ln.gain);
            out.push(&mut self.ln.bias);
        }
        out
    }

    fn param_names(&self) -> Vec<&'static str> {
        let mut out = vec!["spline_W"];
        if self.residual_weights.is_some() {
            out.push("residual_W");
        }
        if self.ln.affine {
            out.extend(["ln.gain", "ln.bias"]);
        }
        out
    }

    fn expand_classes(&mut self, new_classes: usize, rng: &mut Rng) -> Result<()> {
        check_expand(new_classes)?;
        let block = init_rows(rng, new_classes, self.spline_weights.cols())?;
        self.spline_weights.append_rows(&block)?;
        if let Some(r) = &mut self.residual_weights {
            let block = init_rows(rng, new_classes, self.n)?;
            r.append_rows(&block)?;
        }
        self.task_blocks.push(new_classes);
        Ok(())
    }

    fn parameter_count(&self) -> usize {
        self.spline_weights.as_slice().len()
            + self.residual_weights.as_ref().map_or(0, |r| r.as_slice().len())
            + if self.ln.affine { 2 * self.n } else { 0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::LinearHead;

    #[test]
    fn zero_spline_without_residual_gives_zero_logits() {
        let mut rng = Rng::new(0);
        let basis = BsplineBasis::uniform(3, 2, -2.0, 2.0).unwrap();
        let mut h = BsplineHead::new(4, basis, LayerNormParams::new(4, true), false);
        h.expand_classes(3, &mut rng).unwrap();
        h.spline_weights_mut().as_mut_slice().fill(0.0);
        assert_eq!(h.forward(&[0.2, 1.0, -3.0, 0.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn zero_spline_with_residual_is_linear_over_silu() {
        let mut rng = Rng::new(1);
        let basis = BsplineBasis::uniform(3, 2, -2.0, 2.0).unwrap();
        let ln = LayerNormParams::new(4, true);
        let mut h = BsplineHead::new(4, basis, ln.clone(), true);
        h.expand_classes(3, &mut rng).unwrap();
        h.spline_weights_mut().as_mut_slice().fill(0.0);
        let r = h.residual_weights_mut().unwrap().clone();

        let f = [0.2, 1.0, -3.0, 0.5];
        let act: Vec<f64> = ln.forward(&f).unwrap().output.iter().map(|v| silu(*v)).collect();
        let lin = LinearHead::from_parts(r, vec![0.0; 3], vec![3]).unwrap();
        assert_eq!(h.forward(&f).unwrap(), lin.forward(&act).unwrap());
    }
}
