//! Deterministic stand-in for a frozen text encoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// Unit-norm `(dim)` vector seeded by SHA-256 of `seed || prompt`. Equal
/// prompts give equal vectors; different prompts give unrelated Gaussian
/// directions.
pub fn text_embed_stub(prompt: &str, dim: usize, seed: u64) -> Result<Tensor> {
    if dim == 0 {
        return Err(invalid("embedding dimension must be at least 1"));
    }
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(prompt.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Tensor::new(vec![dim], v)
}
