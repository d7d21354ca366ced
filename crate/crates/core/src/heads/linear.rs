//! Plain affine classifier, `logits = W f + b`.

use serde::{Deserialize, Serialize};

use super::{check_expand, check_input, check_upstream, init_rows, Head, HeadGrads};
use crate::codec;
use crate::error::{KacError, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    n: usize,
    weights: Matrix,
    #[serde(with = "codec::f64_vec")]
    bias: Vec<f64>,
    task_blocks: Vec<usize>,
}

impl LinearHead {
    pub fn new(n: usize) -> Self {
        LinearHead {
            n,
            weights: Matrix::zeros(0, n),
            bias: Vec::new(),
            task_blocks: Vec::new(),
        }
    }

    pub fn from_parts(weights: Matrix, bias: Vec<f64>, task_blocks: Vec<usize>) -> Result<Self> {
        let head = LinearHead {
            n: weights.cols(),
            weights,
            bias,
            task_blocks,
        };
        head.validate()?;
        Ok(head)
    }

    pub fn validate(&self) -> Result<()> {
        let classes: usize = self.task_blocks.iter().sum();
        if self.weights.shape() != (classes, self.n) || self.bias.len() != classes {
            return Err(KacError::dim(
                "LinearHead",
                format!("W {}x{} with {} biases", classes, self.n, classes),
                format!(
                    "W {}x{} with {} biases",
                    self.weights.rows(),
                    self.weights.cols(),
                    self.bias.len()
                ),
            ));
        }
        if self.bias.iter().any(|b| !b.is_finite()) {
            return Err(KacError::NonFinite("LinearHead bias"));
        }
        Ok(())
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn forward(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_input("linear_forward", self.n, f)?;
        let mut out = self.weights.matvec(f)?;
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
        Ok(out)
    }
}

impl Head for LinearHead {
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
        LinearHead::forward(self, f)
    }

    fn backward(&self, f: &[f64], upstream: &[f64]) -> Result<HeadGrads> {
        check_input("linear_backward", self.n, f)?;
        check_upstream("linear_backward", self.num_classes(), upstream)?;
        let mut d_w = Matrix::zeros(self.num_classes(), self.n);
        let mut d_f = vec![0.0; self.n];
        for (c, &u) in upstream.iter().enumerate() {
            for (p, dw) in d_w.row_mut(c).iter_mut().enumerate() {
                *dw = u * f[p];
                d_f[p] += u * self.weights.get(c, p);
            }
        }
        Ok(HeadGrads {
            params: vec![d_w.into_vec(), upstream.to_vec()],
            input: d_f,
        })
    }

    fn params(&self) -> Vec<&[f64]> {
        vec![self.weights.as_slice(), &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weights.as_mut_slice(), &mut self.bias]
    }

    fn param_names(&self) -> Vec<&'static str> {
        vec!["W", "b"]
    }

    /// New rows uniform on `(-1/sqrt(n), 1/sqrt(n))`, new biases zero.
    fn expand_classes(&mut self, new_classes: usize, rng: &mut Rng) -> Result<()> {
        check_expand(new_classes)?;
        let block = init_rows(rng, new_classes, self.n)?;
        self.weights.append_rows(&block)?;
        self.bias.extend(std::iter::repeat_n(0.0, new_classes));
        self.task_blocks.push(new_classes);
        Ok(())
    }

    fn parameter_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }
}
