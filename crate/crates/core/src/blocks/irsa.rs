//! Inverted residual shift attention. A conv-BN-ReLU stem produces
//! `X_pre`, a pointwise expansion produces `X_expand`, spatial attention
//! takes queries and keys from `X_pre` and values from `X_expand`, a
//! shift-wise conv refines the attended map, and a pointwise merge returns
//! to the input width. The block output is `x + X_pre + X_out`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::shift::{shift_wise_conv, ShiftSpec};
use crate::error::{dim_err, invalid, Result};
use crate::ops::{conv2d, relu_t, spatial_attention, AttentionParams, ConvParams, LogitScaling};
use crate::tensor::Tensor;

/// Epsilon inside the inference-mode batch-norm square root.
pub const BATCH_NORM_EPS: f64 = 1e-5;

/// Inference-mode batch norm with fixed per-channel statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl BatchNorm {
    /// Mean 0, variance 1, unit scale, zero shift.
    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], var: vec![1.0; channels], gamma: vec![1.0; channels], beta: vec![0.0; channels] }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4()?;
        let n = self.channels();
        if c != n || self.var.len() != n || self.gamma.len() != n || self.beta.len() != n {
            return Err(dim_err(format!("batch norm has {n} channels, input has {c}")));
        }
        let plane = h * w;
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let ch = (i / plane) % c;
            *v = (*v - self.mean[ch]) / (self.var[ch] + BATCH_NORM_EPS).sqrt() * self.gamma[ch] + self.beta[ch];
        }
        Ok(out)
    }
}

/// Conv, batch norm, ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Cbr {
    pub conv: ConvParams,
    pub bn: BatchNorm,
}

impl Cbr {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(relu_t(&self.bn.apply(&conv2d(x, &self.conv)?)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrsaConfig {
    pub channels: usize,
    /// `C' / C`.
    pub ratio: usize,
    pub heads: usize,
    pub shift_groups: usize,
    /// Odd kernel size of the CBR conv.
    pub cbr_kernel: usize,
}

impl IrsaConfig {
    pub fn new(channels: usize) -> Self {
        Self { channels, ratio: 2, heads: 2, shift_groups: 8, cbr_kernel: 3 }
    }

    pub fn expanded(&self) -> usize {
        self.channels * self.ratio
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrsaParams {
    pub cbr: Cbr,
    pub expand: ConvParams,
    pub attn: AttentionParams,
    pub shift: ShiftSpec,
    pub merge: ConvParams,
}

impl IrsaParams {
    pub fn seeded<R: Rng + ?Sized>(cfg: &IrsaConfig, rng: &mut R) -> Result<Self> {
        let c = cfg.channels;
        if c == 0 || cfg.ratio == 0 {
            return Err(invalid("IRSA needs positive channels and an expansion ratio of at least 1"));
        }
        if cfg.cbr_kernel % 2 == 0 {
            return Err(invalid(format!("CBR kernel must be odd, got {}", cfg.cbr_kernel)));
        }
        let ce = cfg.expanded();
        Ok(Self {
            cbr: Cbr { conv: ConvParams::seeded(c, c, cfg.cbr_kernel, 1, cfg.cbr_kernel / 2, 1, rng)?, bn: BatchNorm::identity(c) },
            expand: ConvParams::seeded(c, ce, 1, 1, 0, 1, rng)?,
            attn: AttentionParams::seeded(c, c, ce, ce, cfg.heads, rng)?,
            shift: ShiftSpec::seeded(ce, cfg.shift_groups, rng)?,
            merge: ConvParams::seeded(ce, c, 1, 1, 0, 1, rng)?,
        })
    }

    pub fn channels(&self) -> usize {
        self.merge.out_channels()
    }

    /// Replaces the merge conv with zeros, so the block returns `x + X_pre`.
    pub fn zero_merge(&mut self) {
        self.merge.weight = Tensor::zeros(self.merge.weight.shape());
        self.merge.bias = Some(vec![0.0; self.merge.out_channels()]);
    }
}

/// Every intermediate of one IRSA pass.
#[derive(Debug, Clone, PartialEq)]
pub struct IrsaTrace {
    pub pre: Tensor,
    pub expand: Tensor,
    pub att: Tensor,
    pub swc: Tensor,
    pub out: Tensor,
    pub y: Tensor,
}

pub fn irsa_forward(x: &Tensor, p: &IrsaParams) -> Result<Tensor> {
    Ok(irsa_traced(x, p)?.y)
}

pub fn irsa_traced(x: &Tensor, p: &IrsaParams) -> Result<IrsaTrace> {
    let c = x.dims4()?.1;
    if c != p.channels() || p.cbr.conv.in_channels() != c || p.cbr.conv.out_channels() != c {
        return Err(dim_err(format!("IRSA configured for {} channels, got {c}", p.channels())));
    }
    let pre = p.cbr.forward(x)?;
    let expand = conv2d(&pre, &p.expand)?;
    let att = spatial_attention(&pre, &expand, &p.attn, LogitScaling::InvSqrtDk)?;
    let swc = shift_wise_conv(&att, &p.shift)?;
    let out = conv2d(&att.add(&swc)?, &p.merge)?;
    let y = x.add(&pre)?.add(&out)?;
    Ok(IrsaTrace { pre, expand, att, swc, out, y })
}
