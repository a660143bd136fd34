//! Cross-level fusion with a pixel-wise gate. The gate combines a local
//! path (depthwise conv, channel shuffle, grouped conv) and a global
//! attention path computed from a pointwise projection of the
//! concatenated inputs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Result};
use crate::ops::{channel_shuffle, conv2d, sigmoid_t, spatial_attention, AttentionParams, ConvParams, LogitScaling};
use crate::tensor::{concat_channels, Tensor};

/// Shuffle groups applied to `[local, global, input]` before the gate conv,
/// so every gate-conv group sees all three sources.
pub const GATE_SHUFFLE_GROUPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpcaConfig {
    /// Channels of each fusion input; the gate input has twice as many.
    pub channels: usize,
    pub groups: usize,
    pub heads: usize,
    pub gate_kernel: usize,
}

impl DpcaConfig {
    pub fn new(channels: usize) -> Self {
        Self { channels, groups: 4, heads: 2, gate_kernel: 7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpcaParams {
    pub qkv: ConvParams,
    pub local_dw: ConvParams,
    /// Shuffle groups between the depthwise and the grouped conv.
    pub local_shuffle: usize,
    pub local_group: ConvParams,
    /// Attention with per-head temperatures.
    pub global: AttentionParams,
    pub global_out: ConvParams,
    pub gate: ConvParams,
}

impl DpcaParams {
    pub fn seeded<R: Rng + ?Sized>(cfg: &DpcaConfig, rng: &mut R) -> Result<Self> {
        let c = cfg.channels;
        let d = 2 * c;
        if c == 0 || cfg.gate_kernel % 2 == 0 {
            return Err(invalid("DPCA needs positive channels and an odd gate kernel"));
        }
        let p = Self {
            qkv: ConvParams::seeded(d, d, 1, 1, 0, 1, rng)?,
            local_dw: ConvParams::seeded(d, d, 3, 1, 1, d, rng)?,
            local_shuffle: cfg.groups,
            local_group: ConvParams::seeded(d, d, 3, 1, 1, cfg.groups, rng)?,
            global: AttentionParams::seeded(d, d, d, d, cfg.heads, rng)?,
            global_out: ConvParams::seeded(d, d, 1, 1, 0, 1, rng)?,
            gate: ConvParams::seeded(3 * d, c, cfg.gate_kernel, 1, cfg.gate_kernel / 2, cfg.groups, rng)?,
        };
        p.validate()?;
        Ok(p)
    }

    /// Channels of the concatenated gate input.
    pub fn input_channels(&self) -> usize {
        self.qkv.in_channels()
    }

    pub fn gate_channels(&self) -> usize {
        self.gate.out_channels()
    }

    pub fn zero_gate(&mut self) {
        self.gate.weight = Tensor::zeros(self.gate.weight.shape());
        self.gate.bias = Some(vec![0.0; self.gate.out_channels()]);
    }

    fn validate(&self) -> Result<()> {
        let d = self.input_channels();
        if self.qkv.out_channels() != d || self.local_dw.out_channels() != d || self.local_group.out_channels() != d {
            return Err(dim_err(format!("DPCA local path must keep {d} channels")));
        }
        if self.global.qk_dim() != d || self.global.v_dim() != d || self.global_out.out_channels() != d {
            return Err(dim_err(format!("DPCA global path must keep {d} channels")));
        }
        if self.gate.in_channels() != 3 * d {
            return Err(dim_err(format!("gate conv must read {} channels", 3 * d)));
        }
        if self.local_shuffle == 0 || d % self.local_shuffle != 0 || (3 * d) % GATE_SHUFFLE_GROUPS != 0 {
            return Err(dim_err("DPCA shuffle groups must divide the channel counts"));
        }
        Ok(())
    }
}

/// Intermediates of one gate evaluation; `gate` lies in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateTrace {
    pub qkv: Tensor,
    pub local: Tensor,
    pub global: Tensor,
    pub gate: Tensor,
}

pub fn dpca_gate(x: &Tensor, p: &DpcaParams) -> Result<Tensor> {
    Ok(dpca_traced(x, p)?.gate)
}

pub fn dpca_traced(x: &Tensor, p: &DpcaParams) -> Result<GateTrace> {
    p.validate()?;
    let c = x.dims4()?.1;
    if c != p.input_channels() {
        return Err(dim_err(format!("DPCA expects {} input channels, got {c}", p.input_channels())));
    }
    let qkv = conv2d(x, &p.qkv)?;
    let local = conv2d(&channel_shuffle(&conv2d(&qkv, &p.local_dw)?, p.local_shuffle)?, &p.local_group)?;
    let attended = spatial_attention(&qkv, &qkv, &p.global, LogitScaling::PerHead)?;
    let global = conv2d(&attended, &p.global_out)?.add(&qkv)?;
    let mixed = channel_shuffle(&concat_channels(&[&local, &global, x])?, GATE_SHUFFLE_GROUPS)?;
    let gate = sigmoid_t(&conv2d(&mixed, &p.gate)?);
    Ok(GateTrace { qkv, local, global, gate })
}

/// Gate network plus the output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ClcfParams {
    pub dpca: DpcaParams,
    pub proj: ConvParams,
}

impl ClcfParams {
    pub fn seeded<R: Rng + ?Sized>(cfg: &DpcaConfig, rng: &mut R) -> Result<Self> {
        let dpca = DpcaParams::seeded(cfg, rng)?;
        let proj = ConvParams::seeded(cfg.channels, cfg.channels, 1, 1, 0, 1, rng)?;
        Ok(Self { dpca, proj })
    }
}

/// Intermediates of one fusion: the gate, the projection input and the
/// projected output.
#[derive(Debug, Clone, PartialEq)]
pub struct FuseTrace {
    pub gate: Tensor,
    pub mix: Tensor,
    pub output: Tensor,
}

/// `w * fl + (1 - w) * fh + (fl + fh)`, written as `fh + w (fl - fh)` for
/// the gated part so equal inputs pass through it unchanged.
pub fn gated_mix(fl: &Tensor, fh: &Tensor, w: &Tensor) -> Result<Tensor> {
    fl.expect_same_shape(fh)?;
    fl.expect_same_shape(w)?;
    let data = fl.data().iter().zip(fh.data()).zip(w.data()).map(|((&a, &b), &g)| (b + g * (a - b)) + (a + b)).collect();
    Tensor::new_allow_nonfinite(fl.shape().to_vec(), data)
}

pub fn clcf_fuse(fl: &Tensor, fh: &Tensor, p: &ClcfParams) -> Result<Tensor> {
    Ok(clcf_traced(fl, fh, p)?.output)
}

pub fn clcf_traced(fl: &Tensor, fh: &Tensor, p: &ClcfParams) -> Result<FuseTrace> {
    if fl.shape() != fh.shape() {
        return Err(dim_err(format!("fusion inputs must be aligned, got {:?} and {:?}", fl.shape(), fh.shape())));
    }
    let gate = dpca_gate(&concat_channels(&[fl, fh])?, &p.dpca)?;
    let mix = gated_mix(fl, fh, &gate)?;
    let output = conv2d(&mix, &p.proj)?;
    Ok(FuseTrace { gate, mix, output })
}

/// Fusion with an externally supplied gate.
pub fn clcf_fuse_frozen(fl: &Tensor, fh: &Tensor, gate: &Tensor, proj: &ConvParams) -> Result<Tensor> {
    conv2d(&gated_mix(fl, fh, gate)?, proj)
}

/// Gradient of `sum(g * clcf_fuse_frozen(fl, ..))` with respect to `fl`:
/// the transposed 1x1 projection applied to `g`, times `1 + w`.
pub fn clcf_frozen_vjp_fl(gate: &Tensor, proj: &ConvParams, g: &Tensor) -> Result<Tensor> {
    let (n, oc, h, w) = g.dims4()?;
    if proj.kernel() != (1, 1) || proj.groups != 1 || proj.stride != 1 || proj.padding != 0 || proj.out_channels() != oc {
        return Err(invalid("frozen-gate gradient needs an ungrouped 1x1 projection"));
    }
    let ic = proj.in_channels();
    if gate.shape() != [n, ic, h, w] {
        return Err(dim_err(format!("gate shape {:?} does not match projection input", gate.shape())));
    }
    let plane = h * w;
    let wt = proj.weight.data();
    let mut out = vec![0.0; n * ic * plane];
    for b in 0..n {
        for o in 0..oc {
            let gp = &g.data()[(b * oc + o) * plane..][..plane];
            for i in 0..ic {
                let k = wt[o * ic + i];
                for (dst, &gv) in out[(b * ic + i) * plane..][..plane].iter_mut().zip(gp) {
                    *dst += k * gv;
                }
            }
        }
    }
    for (dst, &wv) in out.iter_mut().zip(gate.data()) {
        *dst *= 1.0 + wv;
    }
    Tensor::new_allow_nonfinite(gate.shape().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::seeded_rng;
    use crate::ops::grad_check;

    fn params(seed: u64) -> ClcfParams {
        ClcfParams::seeded(&DpcaConfig::new(4), &mut seeded_rng(seed)).unwrap()
    }

    #[test]
    fn zero_gate_is_one_half() {
        let mut p = params(1);
        p.dpca.zero_gate();
        let x = Tensor::random_normal(&[1, 8, 4, 4], &mut seeded_rng(2));
        assert!(dpca_gate(&x, &p.dpca).unwrap().data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn gate_strictly_inside_unit_interval() {
        let p = params(3);
        let x = Tensor::random_uniform(&[2, 8, 5, 3], -20.0, 20.0, &mut seeded_rng(4));
        let g = dpca_gate(&x, &p.dpca).unwrap();
        assert_eq!(g.shape(), &[2, 4, 5, 3]);
        assert!(g.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn equal_inputs_mix_to_three_times() {
        let p = params(5);
        let f = Tensor::random_normal(&[1, 4, 4, 4], &mut seeded_rng(6));
        let t = clcf_traced(&f, &f, &p).unwrap();
        assert!(t.mix.bitwise_eq(&f.map(|v| 3.0 * v)));
    }

    #[test]
    fn half_gate_mix() {
        let mut p = params(7);
        p.dpca.zero_gate();
        let mut rng = seeded_rng(8);
        let fl = Tensor::random_normal(&[1, 4, 4, 4], &mut rng);
        let fh = Tensor::random_normal(&[1, 4, 4, 4], &mut rng);
        let t = clcf_traced(&fl, &fh, &p).unwrap();
        let expect = fl.add(&fh).unwrap().scale(1.5);
        assert!(t.mix.max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn frozen_gate_gradient() {
        let p = params(9);
        let mut rng = seeded_rng(10);
        let fl = Tensor::random_normal(&[1, 4, 3, 3], &mut rng);
        let fh = Tensor::random_normal(&[1, 4, 3, 3], &mut rng);
        let gate = dpca_gate(&concat_channels(&[&fl, &fh]).unwrap(), &p.dpca).unwrap();
        let up = Tensor::random_normal(&[1, 4, 3, 3], &mut rng);
        let err = grad_check(
            |v| Ok(clcf_fuse_frozen(v, &fh, &gate, &p.proj)?.mul(&up)?.sum()),
            |_| clcf_frozen_vjp_fl(&gate, &p.proj, &up),
            &fl,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn misaligned_inputs_rejected() {
        let p = params(11);
        assert!(clcf_fuse(&Tensor::zeros(&[1, 4, 4, 4]), &Tensor::zeros(&[1, 4, 2, 2]), &p).is_err());
        assert!(dpca_gate(&Tensor::zeros(&[1, 6, 4, 4]), &p.dpca).is_err());
    }
}
