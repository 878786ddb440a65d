use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ParamTensor;
use crate::error::{Error, Result};

/// Token lookup table, `vocab x dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub table: ParamTensor,
}

impl Embedding {
    pub fn new(vocab: usize, dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            table: ParamTensor::uniform(&[vocab, dim], 1.0, rng),
        }
    }

    pub fn vocab(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn row(&self, index: usize) -> Result<&[f64]> {
        let (vocab, d) = (self.vocab(), self.dim());
        if index >= vocab {
            return Err(Error::IndexOutOfRange { index, vocab });
        }
        Ok(&self.table.values()[index * d..(index + 1) * d])
    }

    pub fn lookup(&self, index: usize) -> Result<Vec<f64>> {
        self.row(index).map(<[f64]>::to_vec)
    }

    /// Scatter-add `upstream` into the gradient row of `index`.
    pub fn accumulate(&mut self, index: usize, upstream: &[f64]) -> Result<()> {
        let (vocab, d) = (self.vocab(), self.dim());
        if index >= vocab {
            return Err(Error::IndexOutOfRange { index, vocab });
        }
        if upstream.len() != d {
            return Err(Error::Shape(format!(
                "embedding gradient of width {} for dim {d}",
                upstream.len()
            )));
        }
        for (g, u) in self.table.grad_mut()[index * d..(index + 1) * d]
            .iter_mut()
            .zip(upstream)
        {
            *g += u;
        }
        Ok(())
    }
}

/// `y = x W^T + b` with `W: out x in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamTensor,
    pub bias: ParamTensor,
}

impl Linear {
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: ParamTensor::uniform(&[output, input], bound, rng),
            bias: ParamTensor::uniform(&[output], bound, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "linear expects width {}, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut y = Array2::zeros((x.nrows(), self.output_dim()));
        y += &self.bias.vec();
        general_mat_mul(1.0, &x, &self.weight.mat().t(), 1.0, &mut y);
        Ok(y)
    }

    /// Accumulate parameter gradients and return `dL/dx`.
    pub fn backward(&mut self, x: ArrayView2<f64>, dy: ArrayView2<f64>) -> Array2<f64> {
        general_mat_mul(1.0, &dy.t(), &x, 1.0, &mut self.weight.grad_mat_mut());
        self.bias.grad_vec_mut().scaled_add(1.0, &dy.sum_axis(Axis(0)));
        dy.dot(&self.weight.mat())
    }

    pub fn params(&self) -> [&ParamTensor; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut ParamTensor; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Mask `dy` by the sign of the pre-activation `x`.
pub fn relu_backward(x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(x, |d, &v| {
        if v <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}
