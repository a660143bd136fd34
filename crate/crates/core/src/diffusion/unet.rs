//! Noise predictors: a small four-resolution U-Net whose encoder levels
//! host the modulation sites, and an oracle that returns the exact noise
//! for a known clean latent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::condmod::{cond_mod, CondModParams};
use crate::diffusion::encoder::LEVELS;
use crate::diffusion::schedule::NoiseSchedule;
use crate::error::{dim_err, invalid, Error, Result};
use crate::ops::{conv2d, group_norm, resize_bilinear, silu_t, ConvParams};
use crate::tensor::Tensor;
use crate::tolerance::GROUP_NORM_EPS;

/// Condition features and text handed to a denoiser, one entry per level.
#[derive(Debug, Clone, Copy)]
pub struct Injection<'a> {
    pub features: &'a [Tensor],
    /// Raw prompt embedding; each modulation site projects it itself.
    pub text_embedding: &'a Tensor,
    pub mods: &'a [CondModParams],
}

/// Predicts the noise in `z_t`; the output has the shape of `z_t`.
pub trait Denoiser: Send + Sync {
    fn predict(&self, z_t: &Tensor, t: usize, cond: Option<&Injection<'_>>) -> Result<Tensor>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub latent_channels: usize,
    /// Width at 64, 32, 16 and 8 pixels for a 64-pixel latent.
    pub channels: [usize; LEVELS],
    pub groups: [usize; LEVELS],
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self { latent_channels: 4, channels: [8, 16, 16, 16], groups: [4, 4, 4, 4] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyUNet {
    pub groups: [usize; LEVELS],
    pub conv_in: ConvParams,
    /// Stride-2 convs producing levels 1, 2 and 3.
    pub down: Vec<ConvParams>,
    pub mid: ConvParams,
    /// `up[i]` maps level `i + 1` back to level `i`.
    pub up: Vec<ConvParams>,
    pub conv_out: ConvParams,
}

impl ToyUNet {
    pub fn seeded<R: Rng + ?Sized>(cfg: &UNetConfig, rng: &mut R) -> Result<Self> {
        let ch = cfg.channels;
        if cfg.latent_channels == 0 || ch.iter().zip(cfg.groups).any(|(&c, g)| g == 0 || c % g != 0) {
            return Err(invalid(format!("bad U-Net widths {ch:?} for groups {:?}", cfg.groups)));
        }
        let conv_in = ConvParams::seeded(cfg.latent_channels, ch[0], 3, 1, 1, 1, rng)?;
        let down = (1..LEVELS).map(|i| ConvParams::seeded(ch[i - 1], ch[i], 3, 2, 1, 1, rng)).collect::<Result<Vec<_>>>()?;
        let mid = ConvParams::seeded(ch[LEVELS - 1], ch[LEVELS - 1], 3, 1, 1, 1, rng)?;
        let up = (0..LEVELS - 1).map(|i| ConvParams::seeded(ch[i + 1], ch[i], 3, 1, 1, 1, rng)).collect::<Result<Vec<_>>>()?;
        let conv_out = ConvParams::seeded(ch[0], cfg.latent_channels, 3, 1, 1, 1, rng)?;
        Ok(Self { groups: cfg.groups, conv_in, down, mid, up, conv_out })
    }

    pub fn channels(&self) -> [usize; LEVELS] {
        let mut c = [self.conv_in.out_channels(); LEVELS];
        for (i, d) in self.down.iter().enumerate() {
            c[i + 1] = d.out_channels();
        }
        c
    }

    fn site(&self, h: &Tensor, level: usize, cond: Option<&Injection<'_>>) -> Result<Tensor> {
        let normed = match cond {
            None => group_norm(h, self.groups[level], GROUP_NORM_EPS)?,
            Some(inj) => {
                let m = &inj.mods[level];
                if m.groups != self.groups[level] {
                    return Err(invalid(format!("level {level} uses {} groups, modulation has {}", self.groups[level], m.groups)));
                }
                let feat = &inj.features[level];
                if feat.shape() != h.shape() {
                    return Err(dim_err(format!(
                        "level {level} condition feature {:?} does not match activation {:?}",
                        feat.shape(),
                        h.shape()
                    )));
                }
                cond_mod(h, feat, &m.project_text(inj.text_embedding)?, m)?
            }
        };
        Ok(silu_t(&normed))
    }
}

/// Sinusoidal embedding of `t` with `dim` entries, sine then cosine per
/// frequency.
pub fn timestep_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim.div_ceil(2).max(1);
    (0..dim)
        .map(|j| {
            let freq = (-(10_000f64.ln()) * (j / 2) as f64 / half as f64).exp();
            let arg = t as f64 * freq;
            if j % 2 == 0 {
                arg.sin()
            } else {
                arg.cos()
            }
        })
        .collect()
}

fn add_channel_bias(x: &mut Tensor, bias: &[f64]) {
    let (_, c, h, w) = x.dims4().expect("rank checked by conv");
    for (i, v) in x.data_mut().iter_mut().enumerate() {
        *v += bias[(i / (h * w)) % c];
    }
}

impl Denoiser for ToyUNet {
    fn predict(&self, z_t: &Tensor, t: usize, cond: Option<&Injection<'_>>) -> Result<Tensor> {
        let (_, _, h, w) = z_t.dims4()?;
        let scale = 1 << (LEVELS - 1);
        if h % scale != 0 || w % scale != 0 {
            return Err(dim_err(format!("latent {h}x{w} must be divisible by {scale}")));
        }
        if let Some(inj) = cond {
            if inj.features.len() != LEVELS || inj.mods.len() != LEVELS {
                return Err(dim_err(format!("injection needs {LEVELS} features and modulations")));
            }
        }
        let mut h0 = conv2d(z_t, &self.conv_in)?;
        let temb = timestep_embedding(t, h0.shape()[1]);
        add_channel_bias(&mut h0, &temb);
        let mut skips = vec![self.site(&h0, 0, cond)?];
        for (i, down) in self.down.iter().enumerate() {
            let x = conv2d(skips.last().expect("level 0 pushed"), down)?;
            skips.push(self.site(&x, i + 1, cond)?);
        }
        let deepest = skips.last().expect("four levels");
        let mut u = silu_t(&conv2d(deepest, &self.mid)?).add(deepest)?;
        for i in (0..LEVELS - 1).rev() {
            let (_, _, sh, sw) = skips[i].dims4()?;
            u = silu_t(&conv2d(&resize_bilinear(&u, sh, sw)?, &self.up[i])?).add(&skips[i])?;
        }
        let out = conv2d(&u, &self.conv_out)?;
        out.expect_same_shape(z_t)?;
        Ok(out)
    }
}

/// Returns `(z_t - sqrt(ab_t) z0) / sqrt(1 - ab_t)`, the noise that
/// produced `z_t` from the stored clean latent.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDenoiser {
    pub z0: Tensor,
    pub schedule: NoiseSchedule,
}

impl Denoiser for OracleDenoiser {
    fn predict(&self, z_t: &Tensor, t: usize, _cond: Option<&Injection<'_>>) -> Result<Tensor> {
        if t == 0 || t > self.schedule.steps() {
            return Err(Error::Numeric(format!("oracle noise undefined at t = {t}")));
        }
        let ab = self.schedule.alpha_bar(t);
        let (a, s) = (ab.sqrt(), (1.0 - ab).sqrt());
        z_t.zip_map(&self.z0, |z, z0| (z - a * z0) / s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::schedule::{forward_noising, make_schedule};
    use crate::init::seeded_rng;

    #[test]
    fn unet_preserves_shape_and_is_deterministic() {
        let net = ToyUNet::seeded(&UNetConfig::default(), &mut seeded_rng(1)).unwrap();
        let z = Tensor::random_normal(&[1, 4, 64, 64], &mut seeded_rng(2));
        let a = net.predict(&z, 7, None).unwrap();
        assert_eq!(a.shape(), z.shape());
        assert!(a.bitwise_eq(&net.predict(&z, 7, None).unwrap()));
        assert!(!a.bitwise_eq(&net.predict(&z, 8, None).unwrap()));
        assert_eq!(net.channels(), [8, 16, 16, 16]);
    }

    #[test]
    fn unet_rejects_odd_latent() {
        let net = ToyUNet::seeded(&UNetConfig::default(), &mut seeded_rng(1)).unwrap();
        assert!(net.predict(&Tensor::zeros(&[1, 4, 12, 12]), 1, None).is_err());
    }

    #[test]
    fn oracle_recovers_noise() {
        let s = make_schedule(50, 1e-4, 0.02).unwrap();
        let mut rng = seeded_rng(3);
        let z0 = Tensor::random_normal(&[1, 2, 4, 4], &mut rng);
        let eps = Tensor::random_normal(&[1, 2, 4, 4], &mut rng);
        let zt = forward_noising(&z0, 30, &eps, &s).unwrap();
        let o = OracleDenoiser { z0, schedule: s };
        assert!(o.predict(&zt, 30, None).unwrap().max_abs_diff(&eps) < 1e-12);
        assert!(o.predict(&zt, 0, None).is_err());
    }

    #[test]
    fn embedding_is_bounded() {
        let e = timestep_embedding(37, 8);
        assert_eq!(e.len(), 8);
        assert!(e.iter().all(|v| v.abs() <= 1.0));
        assert_eq!(timestep_embedding(0, 4), vec![0.0, 1.0, 0.0, 1.0]);
    }
}
