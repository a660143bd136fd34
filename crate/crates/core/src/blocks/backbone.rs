//! A four-stage backbone built from IRSA blocks and a three-level neck of
//! cross-level fusion blocks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::dpca::{clcf_fuse, ClcfParams, DpcaConfig};
use crate::blocks::irsa::{irsa_forward, IrsaConfig, IrsaParams};
use crate::error::{dim_err, invalid, Result};
use crate::ops::{conv2d, relu_t, resize_bilinear, ConvParams};
use crate::tensor::Tensor;

/// Total downsampling of the deepest tap.
pub const BACKBONE_STRIDE: usize = 32;

/// Taps at strides 8, 16 and 32.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidFeatures {
    pub s3: Tensor,
    pub s4: Tensor,
    pub s5: Tensor,
}

impl PyramidFeatures {
    pub fn levels(&self) -> [&Tensor; 3] {
        [&self.s3, &self.s4, &self.s5]
    }

    pub fn validate(&self) -> Result<()> {
        let (n3, c3, h3, w3) = self.s3.dims4()?;
        let (n4, c4, h4, w4) = self.s4.dims4()?;
        let (n5, c5, h5, w5) = self.s5.dims4()?;
        if n3 != n4 || n4 != n5 || c3 != c4 || c4 != c5 {
            return Err(dim_err("pyramid levels must share batch and channel count"));
        }
        if h3 != 2 * h4 || w3 != 2 * w4 || h4 != 2 * h5 || w4 != 2 * w5 {
            return Err(dim_err("pyramid spatial size must halve per level"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub in_channels: usize,
    pub stem: usize,
    /// Width of each stage; the last three must be equal for the neck.
    pub widths: [usize; 4],
    pub ratio: usize,
    pub heads: usize,
    pub shift_groups: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self { in_channels: 3, stem: 8, widths: [8, 16, 16, 16], ratio: 2, heads: 2, shift_groups: 8 }
    }
}

/// Stride-2 downsample followed by one IRSA block.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub down: ConvParams,
    pub irsa: IrsaParams,
}

impl Stage {
    /// Output of the downsample conv (with ReLU) and of the IRSA block.
    pub fn forward_pair(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let d = relu_t(&conv2d(x, &self.down)?);
        let y = irsa_forward(&d, &self.irsa)?;
        Ok((d, y))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneParams {
    pub stem: ConvParams,
    pub stages: Vec<Stage>,
}

impl BackboneParams {
    pub fn seeded<R: Rng + ?Sized>(cfg: &BackboneConfig, rng: &mut R) -> Result<Self> {
        let stem = ConvParams::seeded(cfg.in_channels, cfg.stem, 3, 2, 1, 1, rng)?;
        let mut prev = cfg.stem;
        let mut stages = Vec::with_capacity(4);
        for &w in &cfg.widths {
            let irsa_cfg = IrsaConfig { ratio: cfg.ratio, heads: cfg.heads, shift_groups: cfg.shift_groups, ..IrsaConfig::new(w) };
            stages.push(Stage { down: ConvParams::seeded(prev, w, 3, 2, 1, 1, rng)?, irsa: IrsaParams::seeded(&irsa_cfg, rng)? });
            prev = w;
        }
        Ok(Self { stem, stages })
    }
}

/// Stem plus four stages; returns the last three stage outputs.
pub fn backbone_forward(img: &Tensor, p: &BackboneParams) -> Result<PyramidFeatures> {
    Ok(backbone_traced(img, p)?.1)
}

/// Also returns every stage input, for composition checks.
pub fn backbone_traced(img: &Tensor, p: &BackboneParams) -> Result<(Vec<Tensor>, PyramidFeatures)> {
    let (_, _, h, w) = img.dims4()?;
    if h == 0 || w == 0 || h % BACKBONE_STRIDE != 0 || w % BACKBONE_STRIDE != 0 {
        return Err(dim_err(format!("backbone input {h}x{w} must be divisible by {BACKBONE_STRIDE}")));
    }
    if p.stages.len() != 4 {
        return Err(invalid(format!("backbone needs 4 stages, got {}", p.stages.len())));
    }
    let mut x = relu_t(&conv2d(img, &p.stem)?);
    let mut inputs = Vec::with_capacity(4);
    let mut outs = Vec::with_capacity(4);
    for stage in &p.stages {
        let (d, y) = stage.forward_pair(&x)?;
        inputs.push(d);
        outs.push(y.clone());
        x = y;
    }
    let s5 = outs.pop().expect("four stages");
    let s4 = outs.pop().expect("four stages");
    let s3 = outs.pop().expect("four stages");
    Ok((inputs, PyramidFeatures { s3, s4, s5 }))
}

/// One fusion block per output level.
#[derive(Debug, Clone, PartialEq)]
pub struct NeckParams {
    pub large: ClcfParams,
    pub medium: ClcfParams,
    pub small: ClcfParams,
}

impl NeckParams {
    pub fn seeded<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Result<Self> {
        let cfg = DpcaConfig::new(channels);
        Ok(Self { large: ClcfParams::seeded(&cfg, rng)?, medium: ClcfParams::seeded(&cfg, rng)?, small: ClcfParams::seeded(&cfg, rng)? })
    }
}

fn resized_like(x: &Tensor, like: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = like.dims4()?;
    resize_bilinear(x, h, w)
}

/// The `(low, high)` input pair fused at each level: s3 with upsampled s4,
/// s4 with upsampled s5, and s5 with downsampled s4.
pub fn neck_inputs(pyr: &PyramidFeatures) -> Result<[(Tensor, Tensor); 3]> {
    pyr.validate()?;
    Ok([
        (pyr.s3.clone(), resized_like(&pyr.s4, &pyr.s3)?),
        (pyr.s4.clone(), resized_like(&pyr.s5, &pyr.s4)?),
        (pyr.s5.clone(), resized_like(&pyr.s4, &pyr.s5)?),
    ])
}

pub fn neck_fuse(pyr: &PyramidFeatures, p: &NeckParams) -> Result<PyramidFeatures> {
    let [(l3, h3), (l4, h4), (l5, h5)] = neck_inputs(pyr)?;
    Ok(PyramidFeatures {
        s3: clcf_fuse(&l3, &h3, &p.large)?,
        s4: clcf_fuse(&l4, &h4, &p.medium)?,
        s5: clcf_fuse(&l5, &h5, &p.small)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::seeded_rng;

    #[test]
    fn tap_shapes() {
        let mut rng = seeded_rng(1);
        let p = BackboneParams::seeded(&BackboneConfig::default(), &mut rng).unwrap();
        let img = Tensor::random_uniform(&[1, 3, 64, 64], 0.0, 1.0, &mut rng);
        let pyr = backbone_forward(&img, &p).unwrap();
        assert_eq!(pyr.s3.shape(), &[1, 16, 8, 8]);
        assert_eq!(pyr.s4.shape(), &[1, 16, 4, 4]);
        assert_eq!(pyr.s5.shape(), &[1, 16, 2, 2]);
        assert!(pyr.levels().iter().all(|t| t.is_finite()));
        let fused = neck_fuse(&pyr, &NeckParams::seeded(16, &mut rng).unwrap()).unwrap();
        for (a, b) in fused.levels().iter().zip(pyr.levels()) {
            assert_eq!(a.shape(), b.shape());
        }
    }

    #[test]
    fn indivisible_input_rejected() {
        let p = BackboneParams::seeded(&BackboneConfig::default(), &mut seeded_rng(2)).unwrap();
        assert!(matches!(backbone_forward(&Tensor::zeros(&[1, 3, 48, 64]), &p), Err(crate::Error::Dimension(_))));
    }
}
