//! Dense affine map on a flat vector.

use rand::Rng;

use crate::error::{dim_err, Result};
use crate::ops::conv::INIT_RANGE;
use crate::tensor::Tensor;

/// `y = W x + b` with `weight` shaped `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Vec<f64>) -> Result<Self> {
        let (out, _) = weight.dims2()?;
        if bias.len() != out {
            return Err(dim_err(format!("linear bias has {} entries for {out} outputs", bias.len())));
        }
        Ok(Self { weight, bias })
    }

    /// Seeded uniform weights with a zero bias.
    pub fn seeded<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let weight = Tensor::random_uniform(&[out_dim, in_dim], -INIT_RANGE, INIT_RANGE, rng);
        Self { weight, bias: vec![0.0; out_dim] }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Applies the map to all elements of `x`, which must hold `in_dim` values.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        if x.len() != self.in_dim() {
            return Err(dim_err(format!("linear expects {} inputs, got {}", self.in_dim(), x.len())));
        }
        let out = self
            .weight
            .data()
            .chunks_exact(self.in_dim())
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x.data()).fold(b, |acc, (w, v)| acc + w * v))
            .collect();
        Tensor::new_allow_nonfinite(vec![self.out_dim()], out)
    }
}
