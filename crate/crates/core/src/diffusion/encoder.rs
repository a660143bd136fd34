//! ScaleEncoder: a condition map is aligned into a four-level feature
//! pyramid (64, 32, 16 and 8 pixels) and each level is refined by a
//! depthwise conv, SiLU and a zero-initialized 1x1 convolution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Result};
use crate::ops::{conv2d, silu_t, space_to_depth, ConvParams};
use crate::tensor::Tensor;

/// Number of injection resolutions.
pub const LEVELS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Channels of the incoming condition map (1 or 3).
    pub cond_channels: usize,
    /// Channel width of the pyramid at each level, finest first.
    pub widths: [usize; LEVELS],
    /// Channels of each zero-conv output; must match the denoiser.
    pub out_channels: [usize; LEVELS],
    /// Required height and width of the condition map.
    pub input_size: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { cond_channels: 3, widths: [8, 16, 16, 16], out_channels: [8, 16, 16, 16], input_size: 64 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cond_channels == 0 || self.widths.contains(&0) || self.out_channels.contains(&0) {
            return Err(invalid("encoder channel counts must be positive"));
        }
        if self.input_size == 0 || self.input_size % (1 << (LEVELS - 1)) != 0 {
            return Err(invalid(format!("input size {} must be a positive multiple of 8", self.input_size)));
        }
        Ok(())
    }

    /// Spatial size of each pyramid level.
    pub fn level_sizes(&self) -> [usize; LEVELS] {
        std::array::from_fn(|i| self.input_size >> i)
    }
}

/// Trunk convs (`align[0..3]` plus the extra 8x8 stage in `align[3]`),
/// then one depthwise refinement and one zero conv per level.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleEncoderParams {
    pub align: Vec<ConvParams>,
    pub embed_dw: Vec<ConvParams>,
    pub zero_convs: Vec<ConvParams>,
    pub input_size: usize,
}

impl ScaleEncoderParams {
    /// Seeded trunk and depthwise weights; every zero conv is exactly zero.
    pub fn seeded<R: Rng + ?Sized>(cfg: &EncoderConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut align = Vec::with_capacity(LEVELS);
        let mut in_c = cfg.cond_channels;
        for (i, &w) in cfg.widths.iter().enumerate() {
            let c = if i == 0 { in_c } else { 4 * in_c };
            align.push(ConvParams::seeded(c, w, 3, 1, 1, 1, rng)?);
            in_c = w;
        }
        let embed_dw =
            cfg.widths.iter().map(|&w| ConvParams::seeded(w, w, 3, 1, 1, w, rng)).collect::<Result<Vec<_>>>()?;
        let zero_convs = cfg
            .widths
            .iter()
            .zip(cfg.out_channels)
            .map(|(&w, o)| ConvParams::zeros(w, o, 1, 1, 0, 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { align, embed_dw, zero_convs, input_size: cfg.input_size })
    }

    pub fn cond_channels(&self) -> usize {
        self.align[0].in_channels()
    }

    pub fn out_channels(&self) -> [usize; LEVELS] {
        std::array::from_fn(|i| self.zero_convs[i].out_channels())
    }

    pub fn zero_convs_are_zero(&self) -> bool {
        self.zero_convs.iter().all(ConvParams::is_zero)
    }

    fn validate(&self) -> Result<()> {
        if self.align.len() != LEVELS || self.embed_dw.len() != LEVELS || self.zero_convs.len() != LEVELS {
            return Err(invalid(format!("encoder needs {LEVELS} convs per stage list")));
        }
        Ok(())
    }
}

/// Pyramid levels (finest first) and the space-to-depth tensors that fed
/// levels 1 to 3.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalePyramid {
    pub levels: Vec<Tensor>,
    pub spd: Vec<Tensor>,
}

/// conv-SiLU, then three rounds of space-to-depth followed by conv-SiLU.
pub fn scale_align(cond: &Tensor, p: &ScaleEncoderParams) -> Result<ScalePyramid> {
    p.validate()?;
    let (_, c, h, w) = cond.dims4()?;
    if h != p.input_size || w != p.input_size {
        return Err(dim_err(format!("condition map must be {0}x{0}, got {h}x{w}", p.input_size)));
    }
    if c != p.cond_channels() {
        return Err(dim_err(format!("condition map must have {} channels, got {c}", p.cond_channels())));
    }
    let mut levels = Vec::with_capacity(LEVELS);
    let mut spd = Vec::with_capacity(LEVELS - 1);
    levels.push(silu_t(&conv2d(cond, &p.align[0])?));
    for conv in &p.align[1..] {
        let folded = space_to_depth(levels.last().expect("first level pushed"), 2)?;
        levels.push(silu_t(&conv2d(&folded, conv)?));
        spd.push(folded);
    }
    Ok(ScalePyramid { levels, spd })
}

/// Refines one level: depthwise conv, SiLU, zero conv.
pub fn embed_level(x: &Tensor, p: &ScaleEncoderParams, level: usize) -> Result<Tensor> {
    conv2d(&silu_t(&conv2d(x, &p.embed_dw[level])?), &p.zero_convs[level])
}

/// Four condition features, one per pyramid level.
pub fn scale_embed(pyr: &ScalePyramid, p: &ScaleEncoderParams) -> Result<Vec<Tensor>> {
    p.validate()?;
    if pyr.levels.len() != LEVELS {
        return Err(dim_err(format!("pyramid has {} levels, expected {LEVELS}", pyr.levels.len())));
    }
    pyr.levels.iter().enumerate().map(|(i, x)| embed_level(x, p, i)).collect()
}

/// `scale_align` followed by `scale_embed`.
pub fn encode_conditions(cond: &Tensor, p: &ScaleEncoderParams) -> Result<Vec<Tensor>> {
    scale_embed(&scale_align(cond, p)?, p)
}
