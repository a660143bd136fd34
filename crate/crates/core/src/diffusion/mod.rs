//! Latent diffusion at toy scale: the noise schedule and DDIM stepping,
//! the ScaleEncoder, condition modulation and the wiring that feeds
//! condition features into a denoiser at four resolutions.

pub mod condmod;
pub mod encoder;
pub mod schedule;
pub mod unet;

pub use condmod::{cond_mod, cond_mod_vjp, CondModParams};
pub use encoder::{encode_conditions, scale_align, scale_embed, EncoderConfig, ScaleEncoderParams, ScalePyramid, LEVELS};
pub use schedule::{ddim_sample, ddim_step, ddim_timesteps, forward_noising, make_schedule, NoiseSchedule};
pub use unet::{Denoiser, Injection, OracleDenoiser, ToyUNet, UNetConfig};

use rand::Rng;

use crate::condgen::ConditionSet;
use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

/// Encodes `cond_map` and asks `denoiser` for the noise with modulation
/// active at all four levels.
pub fn injection_forward_map(
    z_t: &Tensor,
    t: usize,
    cond_map: &Tensor,
    text_embedding: &Tensor,
    denoiser: &dyn Denoiser,
    enc: &ScaleEncoderParams,
    mods: &[CondModParams],
) -> Result<Tensor> {
    if mods.len() != LEVELS {
        return Err(dim_err(format!("expected {LEVELS} modulation blocks, got {}", mods.len())));
    }
    let features = encode_conditions(cond_map, enc)?;
    denoiser.predict(z_t, t, Some(&Injection { features: &features, text_embedding, mods }))
}

/// [`injection_forward_map`] on the stacked condition map and prompt
/// embedding of `cond`.
pub fn injection_forward(
    z_t: &Tensor,
    t: usize,
    cond: &ConditionSet,
    denoiser: &dyn Denoiser,
    enc: &ScaleEncoderParams,
    mods: &[CondModParams],
) -> Result<Tensor> {
    injection_forward_map(z_t, t, &cond.condition_map()?, &cond.text_embedding, denoiser, enc, mods)
}

/// Default-shaped toy model: encoder, one modulation block per level and
/// the U-Net, all seeded from one generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedModel {
    pub encoder: ScaleEncoderParams,
    pub mods: Vec<CondModParams>,
    pub unet: ToyUNet,
}

impl ConditionedModel {
    pub fn seeded<R: Rng + ?Sized>(unet_cfg: &UNetConfig, cond_channels: usize, text_dim: usize, latent_size: usize, rng: &mut R) -> Result<Self> {
        let enc_cfg = EncoderConfig {
            cond_channels,
            widths: unet_cfg.channels,
            out_channels: unet_cfg.channels,
            input_size: latent_size,
        };
        let encoder = ScaleEncoderParams::seeded(&enc_cfg, rng)?;
        let mods = (0..LEVELS)
            .map(|i| CondModParams::seeded(unet_cfg.channels[i], unet_cfg.groups[i], text_dim, rng))
            .collect::<Result<Vec<_>>>()?;
        let unet = ToyUNet::seeded(unet_cfg, rng)?;
        Ok(Self { encoder, mods, unet })
    }

    /// Conditioned noise prediction.
    pub fn predict(&self, z_t: &Tensor, t: usize, cond: &ConditionSet) -> Result<Tensor> {
        injection_forward(z_t, t, cond, &self.unet, &self.encoder, &self.mods)
    }

    /// Deterministic DDIM from `z_start` over `timesteps`.
    pub fn sample(&self, z_start: &Tensor, timesteps: &[usize], sched: &NoiseSchedule, cond: &ConditionSet) -> Result<Tensor> {
        let cond_map = cond.condition_map()?;
        let features = encode_conditions(&cond_map, &self.encoder)?;
        let inj = Injection { features: &features, text_embedding: &cond.text_embedding, mods: &self.mods };
        ddim_sample(z_start, timesteps, sched, |z, t| self.unet.predict(z, t, Some(&inj)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::GrayImage;
    use crate::init::seeded_rng;
    use crate::ops::ConvParams;

    fn conditions(seed: u64, text_dim: usize) -> ConditionSet {
        let mut rng = seeded_rng(seed);
        let edge = GrayImage::from_fn(64, 64, |x, y| if (x + y) % 9 == 0 { 255 } else { 0 });
        ConditionSet {
            edge,
            depth: Tensor::random_uniform(&[1, 1, 64, 64], 0.0, 1.0, &mut rng),
            prompt: "a PCB image".into(),
            text_embedding: Tensor::zeros(&[text_dim]),
        }
    }

    #[test]
    fn zero_init_is_transparent() {
        let model = ConditionedModel::seeded(&UNetConfig::default(), 3, 16, 64, &mut seeded_rng(1)).unwrap();
        let cond = conditions(2, 16);
        let z = Tensor::random_normal(&[1, 4, 64, 64], &mut seeded_rng(3));
        let plain = model.unet.predict(&z, 12, None).unwrap();
        assert!(model.predict(&z, 12, &cond).unwrap().bitwise_eq(&plain));
    }

    #[test]
    fn non_zero_convs_make_conditions_matter() {
        let mut model = ConditionedModel::seeded(&UNetConfig::default(), 3, 16, 64, &mut seeded_rng(4)).unwrap();
        let mut rng = seeded_rng(5);
        for z in &mut model.encoder.zero_convs {
            *z = ConvParams::seeded(z.in_channels(), z.out_channels(), 1, 1, 0, 1, &mut rng).unwrap();
        }
        let cond = conditions(6, 16);
        let mut other = cond.clone();
        other.depth = other.depth.map(|v| 1.0 - v);
        let z = Tensor::random_normal(&[1, 4, 64, 64], &mut rng);
        let a = model.predict(&z, 5, &cond).unwrap();
        let b = model.predict(&z, 5, &other).unwrap();
        assert!(a.max_abs_diff(&b) > 0.0);
    }

    #[test]
    fn oracle_sampling_loop_recovers_latent() {
        let sched = make_schedule(50, 1e-4, 0.02).unwrap();
        let mut rng = seeded_rng(7);
        let z0 = Tensor::random_normal(&[1, 4, 8, 8], &mut rng);
        let eps = Tensor::random_normal(&[1, 4, 8, 8], &mut rng);
        let zt = forward_noising(&z0, 50, &eps, &sched).unwrap();
        let oracle = OracleDenoiser { z0: z0.clone(), schedule: sched.clone() };
        let ts = ddim_timesteps(50, 10).unwrap();
        let out = ddim_sample(&zt, &ts, &sched, |z, t| oracle.predict(z, t, None)).unwrap();
        assert!(out.max_abs_diff(&z0) < 1e-7);
    }

    #[test]
    fn mismatched_mods_are_rejected() {
        let model = ConditionedModel::seeded(&UNetConfig::default(), 3, 16, 64, &mut seeded_rng(8)).unwrap();
        let cond = conditions(9, 16);
        let z = Tensor::zeros(&[1, 4, 64, 64]);
        assert!(injection_forward(&z, 1, &cond, &model.unet, &model.encoder, &model.mods[..3]).is_err());
    }
}
