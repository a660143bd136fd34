use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Args;
use pcbdefect::condgen::{adaptive_canny, text_embed_stub, ConditionSet, DepthProvider};
use pcbdefect::config::Settings;
use pcbdefect::diffusion::{ddim_sample, ddim_timesteps, make_schedule, ConditionedModel, Denoiser, UNetConfig};
use pcbdefect::image::GrayImage;
use pcbdefect::init::{child_seed, seeded_rng};
use pcbdefect::Tensor;
use serde::Serialize;

use super::emit;

#[derive(Debug, Args)]
pub struct DiffuseArgs {
    /// Number of DDIM steps; the configured default when omitted.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Seeds the model weights and the starting noise.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Image whose edge and depth maps condition the sample. Its sides set
    /// the latent size and must be multiples of 8. Unconditioned sampling
    /// at the configured latent size when omitted.
    #[arg(long)]
    pub cond_image: Option<PathBuf>,
    /// Prompt text; a zero text embedding when omitted.
    #[arg(long)]
    pub prompt_file: Option<PathBuf>,
    /// Latent output in tensor text format. The PNG view is written next to
    /// it with a `.png` extension.
    #[arg(long)]
    pub out: PathBuf,
    /// Also dump the noise schedule as `t,beta,alpha_bar` CSV.
    #[arg(long)]
    pub schedule_csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct DiffuseReport {
    latent: String,
    png: String,
    shape: Vec<usize>,
    seed: u64,
    timesteps: Vec<usize>,
    conditioned: bool,
    prompt: Option<String>,
    min: f64,
    max: f64,
}

/// Channels side by side, min-max scaled over the whole latent to 0..=255.
/// A constant latent maps to black.
pub fn latent_view(z: &Tensor) -> anyhow::Result<GrayImage> {
    let (_, c, h, w) = z.dims4()?;
    let lo = z.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = z.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    Ok(GrayImage::from_fn(c * w, h, |x, y| {
        let v = z.at4(0, x / w, y, x % w);
        if span > 0.0 {
            ((v - lo) / span * 255.0).round() as u8
        } else {
            0
        }
    }))
}

fn read_prompt(path: &Path) -> anyhow::Result<String> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let prompt = text.trim().to_string();
    if prompt.is_empty() {
        bail!("{} holds an empty prompt", path.display());
    }
    Ok(prompt)
}

pub fn run(a: &DiffuseArgs, s: &Settings) -> anyhow::Result<ExitCode> {
    let seed = a.seed.unwrap_or(s.seed);
    let d = &s.diffusion;
    let steps = a.steps.unwrap_or(d.sample_steps);
    let sched = make_schedule(d.train_steps, d.beta_start, d.beta_end)?;
    let timesteps = ddim_timesteps(d.train_steps, steps)?;
    if let Some(p) = &a.schedule_csv {
        std::fs::write(p, sched.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }

    let prompt = a.prompt_file.as_deref().map(read_prompt).transpose()?;
    let text_dim = s.conditions.embed_dim;
    let text_embedding = match &prompt {
        Some(p) => text_embed_stub(p, text_dim, s.conditions.embed_seed)?,
        None => Tensor::zeros(&[text_dim]),
    };
    let cond_img = a.cond_image.as_deref().map(GrayImage::load).transpose()?;
    let (h, w) = match &cond_img {
        Some(img) => (img.height(), img.width()),
        None => (d.latent_size, d.latent_size),
    };
    if h != w {
        bail!("condition image must be square, got {w}x{h}");
    }

    let unet_cfg = UNetConfig { latent_channels: d.latent_channels, ..UNetConfig::default() };
    let model = ConditionedModel::seeded(&unet_cfg, 3, text_dim, h, &mut seeded_rng(child_seed(seed, 0)))?;
    let z_start = Tensor::random_normal(&[1, d.latent_channels, h, w], &mut seeded_rng(child_seed(seed, 1)));
    let z0 = match &cond_img {
        Some(img) => {
            let cond = ConditionSet {
                edge: adaptive_canny(img, &s.conditions.edge)?,
                depth: s.depth.estimate(img)?,
                prompt: prompt.clone().unwrap_or_default(),
                text_embedding,
            };
            model.sample(&z_start, &timesteps, &sched, &cond)?
        }
        None => ddim_sample(&z_start, &timesteps, &sched, |z, t| model.unet.predict(z, t, None))?,
    };

    z0.write_text(&a.out)?;
    let png = a.out.with_extension("png");
    latent_view(&z0)?.write_png(&png)?;
    emit(&DiffuseReport {
        latent: a.out.display().to_string(),
        png: png.display().to_string(),
        shape: z0.shape().to_vec(),
        seed,
        timesteps,
        conditioned: cond_img.is_some(),
        prompt,
        min: z0.data().iter().copied().fold(f64::INFINITY, f64::min),
        max: z0.data().iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}
