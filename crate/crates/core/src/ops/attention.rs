//! Softmax and token attention over spatial positions.

use rand::Rng;

use crate::error::{dim_err, invalid, Result};
use crate::ops::conv::{conv2d, ConvParams};
use crate::tensor::Tensor;

/// Numerically stable softmax along `axis`.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(dim_err(format!("softmax axis {axis} out of range for rank {}", shape.len())));
    }
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = x.clone();
    let data = out.data_mut();
    let mut buf = vec![0.0; len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            for (k, b) in buf.iter_mut().enumerate() {
                *b = data[base + k * inner];
            }
            softmax_in_place(&mut buf);
            for (k, b) in buf.iter().enumerate() {
                data[base + k * inner] = *b;
            }
        }
    }
    Ok(out)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `softmax(q kᵀ · scale) v` for row-major token matrices:
/// `q` is `(n_q, d)`, `k` is `(n_k, d)`, `v` is `(n_k, d_v)`.
pub fn scaled_dot_attention(q: &Tensor, k: &Tensor, v: &Tensor, scale: f64) -> Result<Tensor> {
    let (nq, d) = q.dims2()?;
    let (nk, dk) = k.dims2()?;
    let (nv, dv) = v.dims2()?;
    if d != dk {
        return Err(dim_err(format!("query dim {d} != key dim {dk}")));
    }
    if nk != nv {
        return Err(dim_err(format!("{nk} keys but {nv} values")));
    }
    let mut out = vec![0.0; nq * dv];
    let mut logits = vec![0.0; nk];
    attend(q.data(), k.data(), v.data(), nq, nk, d, dv, scale, &mut logits, &mut out);
    Tensor::new_allow_nonfinite(vec![nq, dv], out)
}

/// Default logit scale `1 / sqrt(d_k)`.
pub fn default_scale(d_k: usize) -> f64 {
    1.0 / (d_k as f64).sqrt()
}

#[allow(clippy::too_many_arguments)]
fn attend(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    nq: usize,
    nk: usize,
    d: usize,
    dv: usize,
    scale: f64,
    logits: &mut [f64],
    out: &mut [f64],
) {
    debug_assert_eq!(logits.len(), nk);
    for i in 0..nq {
        let qi = &q[i * d..][..d];
        for (j, l) in logits.iter_mut().enumerate() {
            let kj = &k[j * d..][..d];
            *l = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
        }
        softmax_in_place(logits);
        let oi = &mut out[i * dv..][..dv];
        oi.fill(0.0);
        for (j, &p) in logits.iter().enumerate() {
            for (o, vv) in oi.iter_mut().zip(&v[j * dv..][..dv]) {
                *o += p * vv;
            }
        }
    }
}

/// How attention logits are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogitScaling {
    /// Multiply by `1 / sqrt(d_k)`.
    InvSqrtDk,
    /// Divide head `h` by its learned temperature `head_scale[h]`.
    PerHead,
}

/// Pointwise Q/K/V projections plus head layout for spatial attention.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub proj_q: ConvParams,
    pub proj_k: ConvParams,
    pub proj_v: ConvParams,
    pub heads: usize,
    /// Per-head temperature, only read under [`LogitScaling::PerHead`].
    pub head_scale: Vec<f64>,
}

impl AttentionParams {
    pub fn new(proj_q: ConvParams, proj_k: ConvParams, proj_v: ConvParams, heads: usize, head_scale: Vec<f64>) -> Result<Self> {
        let p = Self { proj_q, proj_k, proj_v, heads, head_scale };
        p.validate()?;
        Ok(p)
    }

    /// Seeded projections `qk_src_c -> qk_dim` for Q and K and
    /// `v_src_c -> v_dim` for V, with unit head temperatures.
    pub fn seeded<R: Rng + ?Sized>(
        qk_src_c: usize,
        qk_dim: usize,
        v_src_c: usize,
        v_dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::new(
            ConvParams::seeded(qk_src_c, qk_dim, 1, 1, 0, 1, rng)?,
            ConvParams::seeded(qk_src_c, qk_dim, 1, 1, 0, 1, rng)?,
            ConvParams::seeded(v_src_c, v_dim, 1, 1, 0, 1, rng)?,
            heads,
            vec![1.0; heads],
        )
    }

    pub fn qk_dim(&self) -> usize {
        self.proj_q.out_channels()
    }

    pub fn v_dim(&self) -> usize {
        self.proj_v.out_channels()
    }

    fn validate(&self) -> Result<()> {
        for p in [&self.proj_q, &self.proj_k, &self.proj_v] {
            if p.kernel() != (1, 1) || p.stride != 1 || p.padding != 0 {
                return Err(invalid("attention projections must be 1x1, stride 1, unpadded"));
            }
        }
        if self.proj_q.out_channels() != self.proj_k.out_channels() || self.proj_q.in_channels() != self.proj_k.in_channels() {
            return Err(dim_err("query and key projections must agree"));
        }
        if self.heads == 0 || self.qk_dim() % self.heads != 0 || self.v_dim() % self.heads != 0 {
            return Err(dim_err(format!(
                "qk dim {} and v dim {} must be divisible by {} heads",
                self.qk_dim(),
                self.v_dim(),
                self.heads
            )));
        }
        if self.head_scale.len() != self.heads || self.head_scale.iter().any(|&s| !(s > 0.0)) {
            return Err(invalid("head_scale needs one strictly positive entry per head"));
        }
        Ok(())
    }
}

/// Multi-head attention with spatial positions as tokens and channels as
/// features. Q and K are projected from `qk_src`, V from `v_src`; both
/// sources must share `(N, H, W)`. Returns `(N, v_dim, H, W)`.
pub fn spatial_attention(qk_src: &Tensor, v_src: &Tensor, p: &AttentionParams, scaling: LogitScaling) -> Result<Tensor> {
    let (n, _, h, w) = qk_src.dims4()?;
    let (vn, _, vh, vw) = v_src.dims4()?;
    if (n, h, w) != (vn, vh, vw) {
        return Err(dim_err(format!("attention sources disagree: {:?} vs {:?}", qk_src.shape(), v_src.shape())));
    }
    let q = conv2d(qk_src, &p.proj_q)?;
    let k = conv2d(qk_src, &p.proj_k)?;
    let v = conv2d(v_src, &p.proj_v)?;
    Ok(attend_heads(&q, &k, &v, p.heads, &p.head_scale, scaling))
}

/// Attention over already-projected `(N, C, H, W)` maps, split into heads
/// along channels.
pub(crate) fn attend_heads(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize, head_scale: &[f64], scaling: LogitScaling) -> Tensor {
    let (n, qk_dim, h, w) = (q.shape()[0], q.shape()[1], q.shape()[2], q.shape()[3]);
    let v_dim = v.shape()[1];
    let tokens = h * w;
    let dh = qk_dim / heads;
    let dvh = v_dim / heads;
    let mut out = vec![0.0; n * v_dim * tokens];
    let mut qt = vec![0.0; tokens * dh];
    let mut kt = vec![0.0; tokens * dh];
    let mut vt = vec![0.0; tokens * dvh];
    let mut ot = vec![0.0; tokens * dvh];
    let mut logits = vec![0.0; tokens];
    for b in 0..n {
        for head in 0..heads {
            to_tokens(q, b, head * dh, dh, &mut qt);
            to_tokens(k, b, head * dh, dh, &mut kt);
            to_tokens(v, b, head * dvh, dvh, &mut vt);
            let scale = match scaling {
                LogitScaling::InvSqrtDk => default_scale(dh),
                LogitScaling::PerHead => 1.0 / head_scale[head],
            };
            attend(&qt, &kt, &vt, tokens, tokens, dh, dvh, scale, &mut logits, &mut ot);
            for t in 0..tokens {
                for ch in 0..dvh {
                    out[((b * v_dim) + head * dvh + ch) * tokens + t] = ot[t * dvh + ch];
                }
            }
        }
    }
    Tensor::new_allow_nonfinite(vec![n, v_dim, h, w], out).expect("shape computed from inputs")
}

/// Copies channels `[c0, c0 + len)` of sample `b` into a `(tokens, len)`
/// row-major buffer.
fn to_tokens(x: &Tensor, b: usize, c0: usize, len: usize, buf: &mut [f64]) {
    let (c, h, w) = (x.shape()[1], x.shape()[2], x.shape()[3]);
    let tokens = h * w;
    for ch in 0..len {
        let plane = &x.data()[(b * c + c0 + ch) * tokens..][..tokens];
        for (t, &v) in plane.iter().enumerate() {
            buf[t * len + ch] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::seeded_rng;

    #[test]
    fn softmax_worked_values() {
        let x = Tensor::new(vec![3], vec![0.0, 0.0, 0.0]).unwrap();
        for v in softmax(&x, 0).unwrap().data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let x = Tensor::new(vec![2], vec![1000.0, 0.0]).unwrap();
        let y = softmax(&x, 0).unwrap();
        assert_eq!(y.data()[0], 1.0);
        assert!(y.data()[1] >= 0.0 && y.data()[1] < 1e-300);
        // e^x / sum e^x for [1, 2, 3], evaluated directly.
        let x = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = softmax(&x, 0).unwrap();
        let denom: f64 = [1f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (i, expect) in [0.0900, 0.2447, 0.6652].iter().enumerate() {
            assert!((y.data()[i] - expect).abs() < 1e-4);
            assert!((y.data()[i] - ((i + 1) as f64).exp() / denom).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_inner_axis() {
        let x = Tensor::from_fn(&[2, 3, 2], |i| i as f64 * 0.3);
        let y = softmax(&x, 1).unwrap();
        for o in 0..2 {
            for i in 0..2 {
                let s: f64 = (0..3).map(|k| y.data()[o * 6 + k * 2 + i]).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        assert!(softmax(&x, 3).is_err());
    }

    #[test]
    fn equal_keys_give_mean_of_values() {
        let q = Tensor::new(vec![2, 2], vec![0.3, -1.0, 4.0, 2.0]).unwrap();
        let k = Tensor::new(vec![3, 2], vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        let v = Tensor::new(vec![3, 1], vec![1.0, 2.0, 6.0]).unwrap();
        let o = scaled_dot_attention(&q, &k, &v, default_scale(2)).unwrap();
        for x in o.data() {
            assert!((x - 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn single_token_returns_value() {
        let q = Tensor::new(vec![1, 2], vec![5.0, -5.0]).unwrap();
        let k = Tensor::new(vec![1, 2], vec![0.1, 0.7]).unwrap();
        let v = Tensor::new(vec![1, 3], vec![1.5, -2.0, 0.25]).unwrap();
        assert_eq!(scaled_dot_attention(&q, &k, &v, 1.0).unwrap().data(), v.data());
    }

    #[test]
    fn matches_naive_double_loop() {
        let q = Tensor::new(vec![3, 2], vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]).unwrap();
        let k = Tensor::new(vec![3, 2], vec![0.7, -0.1, 0.2, 0.2, -0.5, 0.9]).unwrap();
        let v = Tensor::new(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 2.0, -1.0]).unwrap();
        let o = scaled_dot_attention(&q, &k, &v, default_scale(2)).unwrap();
        for i in 0..3 {
            let w: Vec<f64> = (0..3)
                .map(|j| ((q.data()[2 * i] * k.data()[2 * j] + q.data()[2 * i + 1] * k.data()[2 * j + 1]) / 2f64.sqrt()).exp())
                .collect();
            let z: f64 = w.iter().sum();
            for c in 0..2 {
                let expect: f64 = (0..3).map(|j| w[j] / z * v.data()[2 * j + c]).sum();
                assert!((o.data()[2 * i + c] - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn token_count_mismatch() {
        let q = Tensor::zeros(&[2, 2]);
        let k = Tensor::zeros(&[3, 2]);
        let v = Tensor::zeros(&[2, 2]);
        assert!(matches!(scaled_dot_attention(&q, &k, &v, 1.0), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn spatial_attention_shapes_and_head_validation() {
        let mut rng = seeded_rng(6);
        let x = Tensor::random_uniform(&[1, 4, 3, 3], -1.0, 1.0, &mut rng);
        let v = Tensor::random_uniform(&[1, 8, 3, 3], -1.0, 1.0, &mut rng);
        let p = AttentionParams::seeded(4, 4, 8, 8, 2, &mut rng).unwrap();
        let y = spatial_attention(&x, &v, &p, LogitScaling::InvSqrtDk).unwrap();
        assert_eq!(y.shape(), &[1, 8, 3, 3]);
        assert!(AttentionParams::seeded(4, 4, 8, 6, 4, &mut rng).is_err());
        let mut bad = p.clone();
        bad.head_scale[0] = 0.0;
        assert!(bad.validate().is_err());
    }
}
