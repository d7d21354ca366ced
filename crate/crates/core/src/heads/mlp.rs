//! Width-matched MLP head: `W2 · silu(W1 f + b1) + b2` with
//! `hidden = N * n`. With `frozen_first_layer` set, `W1` and `b1` stay at
//! their random initialization and are not exposed to the optimizer.

use serde::{Deserialize, Serialize};

use super::{check_expand, check_input, check_upstream, init_rows, Head, HeadGrads};
use crate::basis::{silu, silu_grad};
use crate::codec;
use crate::error::{KacError, Result};
use crate::numerics::{rand_uniform, Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpHead {
    n: usize,
    hidden: usize,
    w1: Matrix,
    #[serde(with = "codec::f64_vec")]
    b1: Vec<f64>,
    w2: Matrix,
    #[serde(with = "codec::f64_vec")]
    b2: Vec<f64>,
    frozen_first_layer: bool,
    task_blocks: Vec<usize>,
}

impl MlpHead {
    pub fn new(n: usize, hidden: usize, frozen_first_layer: bool, rng: &mut Rng) -> Result<Self> {
        if n == 0 || hidden == 0 {
            return Err(KacError::param("MLP dimensions must be at least 1"));
        }
        let w1 = init_rows(rng, hidden, n)?;
        let a = 1.0 / (n as f64).sqrt();
        let b1 = rand_uniform(rng, 1, hidden, -a, a)?.into_vec();
        Ok(MlpHead {
            n,
            hidden,
            w1,
            b1,
            w2: Matrix::zeros(0, hidden),
            b2: Vec::new(),
            frozen_first_layer,
            task_blocks: Vec::new(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let classes: usize = self.task_blocks.iter().sum();
        let ok = self.w1.shape() == (self.hidden, self.n)
            && self.b1.len() == self.hidden
            && self.w2.shape() == (classes, self.hidden)
            && self.b2.len() == classes;
        if !ok {
            return Err(KacError::dim(
                "MlpHead",
                format!("n = {}, hidden = {}, classes = {}", self.n, self.hidden, classes),
                format!("W1 {:?}, W2 {:?}", self.w1.shape(), self.w2.shape()),
            ));
        }
        Ok(())
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn first_layer(&self) -> (&Matrix, &[f64]) {
        (&self.w1, &self.b1)
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen_first_layer
    }

    fn pre_activation(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.w1.matvec(f)?;
        for (v, b) in z.iter_mut().zip(&self.b1) {
            *v += b;
        }
        Ok(z)
    }

    pub fn forward(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_input("mlp_forward", self.n, f)?;
        let h: Vec<f64> = self.pre_activation(f)?.into_iter().map(silu).collect();
        let mut out = self.w2.matvec(&h)?;
        for (o, b) in out.iter_mut().zip(&self.b2) {
            *o += b;
        }
        Ok(out)
    }
}

impl Head for MlpHead {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn num_classes(&self) -> usize {
        self.w2.rows()
    }

    fn task_blocks(&self) -> &[usize] {
        &self.task_blocks
    }

    fn forward(&self, f: &[f64]) -> Result<Vec<f64>> {
        MlpHead::forward(self, f)
    }

    fn backward(&self, f: &[f64], upstream: &[f64]) -> Result<HeadGrads> {
        check_input("mlp_backward", self.n, f)?;
        let classes = self.num_classes();
        check_upstream("mlp_backward", classes, upstream)?;
        let z = self.pre_activation(f)?;
        let h: Vec<f64> = z.iter().map(|v| silu(*v)).collect();

        let mut d_w2 = Matrix::zeros(classes, self.hidden);
        let mut d_h = vec![0.0; self.hidden];
        for (c, &u) in upstream.iter().enumerate() {
            for (k, dw) in d_w2.row_mut(c).iter_mut().enumerate() {
                *dw = u * h[k];
                d_h[k] += u * self.w2.get(c, k);
            }
        }
        let d_z: Vec<f64> = d_h.iter().zip(&z).map(|(d, v)| d * silu_grad(*v)).collect();
        let mut d_w1 = Matrix::zeros(self.hidden, self.n);
        let mut d_f = vec![0.0; self.n];
        for (k, &dz) in d_z.iter().enumerate() {
            for (p, dw) in d_w1.row_mut(k).iter_mut().enumerate() {
                *dw = dz * f[p];
                d_f[p] += dz * self.w1.get(k, p);
            }
        }
        let mut params = Vec::with_capacity(4);
        if !self.frozen_first_layer {
            params.push(d_w1.into_vec());
            params.push(d_z);
        }
        params.push(d_w2.into_vec());
        params.push(upstream.to_vec());
        Ok(HeadGrads { params, input: d_f })
    }

    fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(4);
        if !self.frozen_first_layer {
            out.push(self.w1.as_slice());
            out.push(&self.b1[..]);
        }
        out.push(self.w2.as_slice());
        out.push(&self.b2[..]);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(4);
        if !self.frozen_first_layer {
            out.push(self.w1.as_mut_slice());
            out.push(&mut self.b1[..]);
        }
        out.push(self.w2.as_mut_slice());
        out.push(&mut self.b2[..]);
        out
    }

    fn param_names(&self) -> Vec<&'static str> {
        if self.frozen_first_layer {
            vec!["W2", "b2"]
        } else {
            vec!["W1", "b1", "W2", "b2"]
        }
    }

    fn expand_classes(&mut self, new_classes: usize, rng: &mut Rng) -> Result<()> {
        check_expand(new_classes)?;
        let block = init_rows(rng, new_classes, self.hidden)?;
        self.w2.append_rows(&block)?;
        self.b2.extend(std::iter::repeat_n(0.0, new_classes));
        self.task_blocks.push(new_classes);
        Ok(())
    }

    fn parameter_count(&self) -> usize {
        self.w1.as_slice().len() + self.b1.len() + self.w2.as_slice().len() + self.b2.len()
    }
}
