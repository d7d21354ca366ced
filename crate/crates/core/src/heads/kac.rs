//! The Kolmogorov-Arnold classifier head.
//!
//! Pipeline for a feature `f` of dimension `n`:
//!
//! 1. `x' = LN(f)`
//! 2. `Phi[p][i] = exp(-(x'_p - c_i)^2 / (2 sigma_i^2))`, an `n x N` matrix
//! 3. flatten `Phi` channel-major: `phi[p * N + i] = Phi[p][i]`
//! 4. `logits = W · phi` with `W` of shape `C x (N n)`
//!
//! There is no bias and no linear shortcut. The factored form
//! `diag(W_C · Phi · W_q)` is kept only as an equivalence oracle; the
//! consolidated `W[c, p N + i] = W_C[c, p] W_q[i, c]` reproduces it.

use serde::{Deserialize, Serialize};

use super::{check_expand, check_input, check_upstream, init_rows, Head, HeadGrads, LayerNormParams};
use crate::basis::RbfGrid;
use crate::error::{KacError, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KacHead {
    n: usize,
    grid: RbfGrid,
    ln: LayerNormParams,
    weights: Matrix,
    task_blocks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KacGrads {
    pub d_weights: Matrix,
    pub d_gain: Vec<f64>,
    pub d_bias: Vec<f64>,
    pub d_input: Vec<f64>,
}

impl KacHead {
    /// Head with zero classes; call [`Head::expand_classes`] per task.
    pub fn new(n: usize, grid: RbfGrid, ln: LayerNormParams) -> Self {
        let cols = grid.len() * n;
        KacHead {
            n,
            grid,
            ln,
            weights: Matrix::zeros(0, cols),
            task_blocks: Vec::new(),
        }
    }

    pub fn from_parts(
        grid: RbfGrid,
        ln: LayerNormParams,
        weights: Matrix,
        task_blocks: Vec<usize>,
    ) -> Result<Self> {
        let head = KacHead {
            n: ln.dim(),
            grid,
            ln,
            weights,
            task_blocks,
        };
        head.validate()?;
        Ok(head)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.ln.validate()?;
        if self.ln.dim() != self.n {
            return Err(KacError::dim(
                "KacHead",
                format!("n = {}", self.n),
                format!("layer norm of dimension {}", self.ln.dim()),
            ));
        }
        let classes: usize = self.task_blocks.iter().sum();
        if self.weights.shape() != (classes, self.grid.len() * self.n) {
            return Err(KacError::dim(
                "KacHead",
                format!("expected W of {}x{}", classes, self.grid.len() * self.n),
                format!("{}x{}", self.weights.rows(), self.weights.cols()),
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> &RbfGrid {
        &self.grid
    }

    pub fn layer_norm(&self) -> &LayerNormParams {
        &self.ln
    }

    pub fn layer_norm_mut(&mut self) -> &mut LayerNormParams {
        &mut self.ln
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    /// Flattened `Phi(LN(f))`, channel-major (`p * N + i`).
    pub fn features(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_input("kac_forward", self.n, f)?;
        let x = self.ln.forward(f)?.output;
        Ok(self.grid.eval_matrix(&x).into_vec())
    }

    pub fn forward(&self, f: &[f64]) -> Result<Vec<f64>> {
        let phi = self.features(f)?;
        self.weights.matvec(&phi)
    }

    pub fn backward(&self, f: &[f64], upstream: &[f64]) -> Result<KacGrads> {
        check_input("kac_backward", self.n, f)?;
        let classes = self.weights.rows();
        check_upstream("kac_backward", classes, upstream)?;
        let nb = self.grid.len();
        let cache = self.ln.forward(f)?;
        let phi = self.grid.eval_matrix(&cache.output).into_vec();
        let cols = phi.len();

        let mut d_weights = Matrix::zeros(classes, cols);
        let mut d_phi = vec![0.0; cols];
        for c in 0..classes {
            let u = upstream[c];
            if u == 0.0 {
                continue;
            }
            for ((dw, p), (dp, w)) in d_weights
                .row_mut(c)
                .iter_mut()
                .zip(&phi)
                .zip(d_phi.iter_mut().zip(self.weights.row(c)))
            {
                *dw = u * p;
                *dp += u * w;
            }
        }

        let d_x: Vec<f64> = cache
            .output
            .iter()
            .enumerate()
            .map(|(p, &x)| {
                self.grid
                    .grad(x)
                    .iter()
                    .zip(&d_phi[p * nb..(p + 1) * nb])
                    .map(|(g, d)| g * d)
                    .sum()
            })
            .collect();
        let (d_gain, d_bias, d_input) = self.ln.backward(&cache, &d_x);
        Ok(KacGrads {
            d_weights,
            d_gain,
            d_bias,
            d_input,
        })
    }
}

impl Head for KacHead {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    fn task_blocks(&self) -> &[usize] {
        &self.task_blocks
    }

    fn forward(&self, f: &[f64]) -> Result<Vec<f64>> {
        KacHead::forward(self, f)
    }

    fn backward(&self, f: &[f64], upstream: &[f64]) -> Result<HeadGrads> {
        let g = KacHead::backward(self, f, upstream)?;
        let mut params = vec![g.d_weights.into_vec()];
        if self.ln.affine {
            params.push(g.d_gain);
            params.push(g.d_bias);
        }
        Ok(HeadGrads {
            params,
            input: g.d_input,
        })
    }

    fn params(&self) -> Vec<&[f64]> {
        let mut out = vec![self.weights.as_slice()];
        if self.ln.affine {
            out.push(&self.ln.gain);
            out.push(&self.ln.bias);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.weights.as_mut_slice()];
        if self.ln.affine {
            out.push(&mut self.ln.gain);
            out.push(&mut self.ln.bias);
        }
        out
    }

    fn param_names(&self) -> Vec<&'static str> {
        if self.ln.affine {
            vec!["W", "ln.gain", "ln.bias"]
        } else {
            vec!["W"]
        }
    }

    fn expand_classes(&mut self, new_classes: usize, rng: &mut Rng) -> Result<()> {
        check_expand(new_classes)?;
        let block = init_rows(rng, new_classes, self.weights.cols())?;
        self.weights.append_rows(&block)?;
        self.task_blocks.push(new_classes);
        Ok(())
    }

    fn parameter_count(&self) -> usize {
        self.weights.as_slice().len() + if self.ln.affine { 2 * self.n } else { 0 }
    }
}

/// Factored weights `W_C` (`C x n`) and `W_q` (`N x C`).
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredKacWeights {
    pub channel: Matrix,
    pub basis: Matrix,
}

impl FactoredKacWeights {
    pub fn new(channel: Matrix, basis: Matrix) -> Result<Self> {
        if channel.rows() != basis.cols() {
            return Err(KacError::dim(
                "FactoredKacWeights",
                format!("W_C {}x{}", channel.rows(), channel.cols()),
                format!("W_q {}x{}", basis.rows(), basis.cols()),
            ));
        }
        Ok(FactoredKacWeights { channel, basis })
    }

    /// `W[c, p N + i] = W_C[c, p] * W_q[i, c]`.
    pub fn consolidate(&self) -> Matrix {
        let (classes, n) = self.channel.shape();
        let nb = self.basis.rows();
        let mut w = Matrix::zeros(classes, n * nb);
        for c in 0..classes {
            for p in 0..n {
                for i in 0..nb {
                    w.set(c, p * nb + i, self.channel.get(c, p) * self.basis.get(i, c));
                }
            }
        }
        w
    }
}

/// `diag(W_C · Phi(LN(f)) · W_q)`, computed with full matrix products.
pub fn kac_forward_factored(
    fw: &FactoredKacWeights,
    grid: &RbfGrid,
    ln: &LayerNormParams,
    f: &[f64],
) -> Result<Vec<f64>> {
    if fw.channel.cols() != f.len() || fw.basis.rows() != grid.len() {
        return Err(KacError::dim(
            "kac_forward_factored",
            format!("W_C {}x{}, W_q {}x{}", fw.channel.rows(), fw.channel.cols(), fw.basis.rows(), fw.basis.cols()),
            format!("feature length {}, {} basis functions", f.len(), grid.len()),
        ));
    }
    let phi = grid.eval_matrix(&ln.forward(f)?.output);
    let full = fw.channel.matmul(&phi)?.matmul(&fw.basis)?;
    Ok((0..full.rows()).map(|c| full.get(c, c)).collect())
}

/// Per-class, per-channel interest: `score[c, p] = sum_i |W[c, p N + i]|`,
/// each row scaled by its maximum. All-zero rows stay zero.
pub fn activation_map(head: &KacHead) -> Matrix {
    let classes = head.weights.rows();
    let nb = head.grid.len();
    let mut map = Matrix::zeros(classes, head.n);
    for c in 0..classes {
        let row = head.weights.row(c);
        let scores = map.row_mut(c);
        for (p, s) in scores.iter_mut().enumerate() {
            *s = row[p * nb..(p + 1) * nb].iter().map(|w| w.abs()).sum();
        }
        let max = scores.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            for s in scores.iter_mut() {
                *s /= max;
            }
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rand_uniform;

    fn head(n: usize, nb: usize, weights: Matrix) -> KacHead {
        let grid = RbfGrid::new(nb, -2.0, 2.0, 1.0).unwrap();
        let blocks = vec![weights.rows()];
        KacHead::from_parts(grid, LayerNormParams::new(n, true), weights, blocks).unwrap()
    }

    #[test]
    fn hand_pipeline_example() {
        let h = head(2, 1, Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap());
        let logit = h.forward(&[1.0, -1.0]).unwrap()[0];
        // LN gives +-1/sqrt(1 + 1e-5); the single center is 0.
        let x = 1.0 / (1.0f64 + 1e-5).sqrt();
        let expected = 2.0 * (-x * x / 2.0).exp();
        assert!((logit - expected).abs() < 1e-14);
        assert!((logit - 1.21307).abs() < 1e-5);
    }

    #[test]
    fn zero_and_duplicate_rows() {
        let mut rng = Rng::new(1);
        let h = head(3, 4, Matrix::zeros(2, 12));
        assert_eq!(h.forward(&[0.3, -1.0, 2.0]).unwrap(), vec![0.0, 0.0]);

        let row = rand_uniform(&mut rng, 1, 12, -1.0, 1.0).unwrap().into_vec();
        let w = Matrix::from_rows(&[row.clone(), row]).unwrap();
        let logits = head(3, 4, w).forward(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(logits[0], logits[1]);
    }

    #[test]
    fn wrong_length_is_a_dimension_error() {
        let h = head(3, 4, Matrix::zeros(1, 12));
        assert!(matches!(h.forward(&[1.0]), Err(KacError::Dimension { .. })));
        assert!(h.backward(&[1.0, 2.0, 3.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn weight_gradient_is_upstream_times_features() {
        let mut rng = Rng::new(2);
        let w = rand_uniform(&mut rng, 3, 8, -1.0, 1.0).unwrap();
        let h = head(2, 4, w);
        let f = [0.4, -0.9];
        let up = [0.5, -2.0, 1.5];
        let g = h.backward(&f, &up).unwrap();
        let phi = h.features(&f).unwrap();
        for c in 0..3 {
            for j in 0..8 {
                assert_eq!(g.d_weights.get(c, j), up[c] * phi[j]);
            }
        }
        let zero = h.backward(&f, &[0.0; 3]).unwrap();
        assert!(zero.d_weights.as_slice().iter().all(|v| *v == 0.0));
        assert!(zero.d_input.iter().chain(&zero.d_gain).chain(&zero.d_bias).all(|v| *v == 0.0));
    }

    #[test]
    fn factored_single_class_is_full_contraction() {
        let mut rng = Rng::new(3);
        let grid = RbfGrid::new(3, -2.0, 2.0, 1.0).unwrap();
        let ln = LayerNormParams::new(4, true);
        let wc = rand_uniform(&mut rng, 1, 4, -1.0, 1.0).unwrap();
        let wq = rand_uniform(&mut rng, 3, 1, -1.0, 1.0).unwrap();
        let f = [0.1, 0.5, -0.3, 2.0];
        let fw = FactoredKacWeights::new(wc.clone(), wq.clone()).unwrap();
        let got = kac_forward_factored(&fw, &grid, &ln, &f).unwrap();
        let phi = grid.eval_matrix(&ln.forward(&f).unwrap().output);
        let mut expected = 0.0;
        for p in 0..4 {
            for i in 0..3 {
                expected += wc.get(0, p) * phi.get(p, i) * wq.get(i, 0);
            }
        }
        assert!((got[0] - expected).abs() < 1e-15);

        let zero = FactoredKacWeights::new(wc, Matrix::zeros(3, 1)).unwrap();
        assert_eq!(kac_forward_factored(&zero, &grid, &ln, &f).unwrap(), vec![0.0]);
    }

    #[test]
    fn factored_shape_mismatch() {
        assert!(FactoredKacWeights::new(Matrix::zeros(2, 3), Matrix::zeros(4, 3)).is_err());
    }

    #[test]
    fn expansion_bookkeeping() {
        let mut rng = Rng::new(4);
        let grid = RbfGrid::new(4, -2.0, 2.0, 1.0).unwrap();
        let mut h = KacHead::new(5, grid, LayerNormParams::new(5, true));
        assert!(h.expand_classes(0, &mut rng).is_err());
        h.expand_classes(3, &mut rng).unwrap();
        h.expand_classes(2, &mut rng).unwrap();
        assert_eq!(h.weights().rows(), 5);
        assert_eq!(h.task_blocks(), &[3, 2]);
        let a = 1.0 / 20f64.sqrt();
        assert!(h.weights().as_slice().iter().all(|w| w.abs() < a));
    }

    #[test]
    fn activation_map_examples() {
        let zero = head(3, 2, Matrix::zeros(2, 6));
        assert!(activation_map(&zero).as_slice().iter().all(|v| *v == 0.0));

        let mut w = Matrix::zeros(2, 6);
        w.set(1, 2 * 2 + 1, -0.7);
        let map = activation_map(&head(3, 2, w));
        assert_eq!(map.row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(map.row(1), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn activation_map_matches_double_loop() {
        let mut rng = Rng::new(8);
        let w = rand_uniform(&mut rng, 4, 15, -1.0, 1.0).unwrap();
        let h = head(5, 3, w.clone());
        let map = activation_map(&h);
        for c in 0..4 {
            let mut raw = [0.0; 5];
            for (p, r) in raw.iter_mut().enumerate() {
                for i in 0..3 {
                    *r += w.get(c, p * 3 + i).abs();
                }
            }
            let m = raw.iter().copied().fold(0.0, f64::max);
            for p in 0..5 {
                assert!((map.get(c, p) - raw[p] / m).abs() < 1e-15);
            }
        }
    }
}
