//! Run settings read from a flat `key = value` file. Blank lines and `#`
//! comments are skipped, every key is optional and unknown keys are
//! rejected so a typo cannot silently fall back to a default.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::condgen::{BlurDepth, ConditionConfig, ScaleThresholds};
use crate::dataset::DEFAULT_TRAIN_RATIO;
use crate::error::{invalid, io_err, Error, Result};
use crate::metrics::{parse_iou_spec, ApMethod, SsimConfig, SsimWindow};

/// Environment variable consulted when no `--config` path is given.
pub const CONFIG_ENV: &str = "PCBDEFECT_CONFIG";

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSettings {
    /// Length `T` of the training schedule.
    pub train_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Number of DDIM steps taken when sampling.
    pub sample_steps: usize,
    /// Side of the square latent the toy denoiser works on.
    pub latent_size: usize,
    pub latent_channels: usize,
}

impl Default for DiffusionSettings {
    fn default() -> Self {
        Self { train_steps: 50, beta_start: 1e-4, beta_end: 0.02, sample_steps: 10, latent_size: 64, latent_channels: 4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    /// IoU thresholds for the averaged mAP, as `0.5` or `0.5:0.95`.
    pub iou: String,
    pub ap_method: ApMethod,
    /// IoU used for the precision/recall summary.
    pub pr_iou: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { iou: "0.5:0.95".into(), ap_method: ApMethod::Interp101, pr_iou: 0.5 }
    }
}

impl EvalSettings {
    pub fn thresholds(&self) -> Result<Vec<f64>> {
        parse_iou_spec(&self.iou)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub conditions: ConditionConfig,
    pub depth: BlurDepth,
    pub diffusion: DiffusionSettings,
    pub ssim: SsimConfig,
    pub eval: EvalSettings,
    pub train_ratio: f64,
    pub seed: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            conditions: ConditionConfig::default(),
            depth: BlurDepth::default(),
            diffusion: DiffusionSettings::default(),
            ssim: SsimConfig::default(),
            eval: EvalSettings::default(),
            train_ratio: DEFAULT_TRAIN_RATIO,
            seed: 0,
        }
    }
}

/// Every key the parser accepts, in the order [`Settings::to_text`] writes
/// them.
pub const KEYS: &[&str] = &[
    "seed",
    "edge.low_factor",
    "edge.high_factor",
    "edge.gaussian_sigma",
    "edge.gaussian_radius",
    "prompt.small_max",
    "prompt.large_min",
    "prompt.count_threshold",
    "prompt.spread_threshold",
    "embed.dim",
    "embed.seed",
    "depth.sigma",
    "depth.radius",
    "diffusion.train_steps",
    "diffusion.beta_start",
    "diffusion.beta_end",
    "diffusion.sample_steps",
    "diffusion.latent_size",
    "diffusion.latent_channels",
    "ssim.c1",
    "ssim.c2",
    "ssim.window_size",
    "ssim.gaussian_sigma",
    "ssim.global",
    "ssim.max_val",
    "eval.iou",
    "eval.ap_method",
    "eval.pr_iou",
    "dataset.train_ratio",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| Error::Parse(format!("{key} = {value}: {e}")))
}

fn parse_ap_method(value: &str) -> Result<ApMethod> {
    match value {
        "interp101" => Ok(ApMethod::Interp101),
        "all_point" => Ok(ApMethod::AllPoint),
        other => Err(Error::Parse(format!("eval.ap_method = {other}: expected interp101 or all_point"))),
    }
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let c = &mut self.conditions;
        match key {
            "seed" => self.seed = parse_value(key, value)?,
            "edge.low_factor" => c.edge.low_factor = parse_value(key, value)?,
            "edge.high_factor" => c.edge.high_factor = parse_value(key, value)?,
            "edge.gaussian_sigma" => c.edge.gaussian_sigma = parse_value(key, value)?,
            "edge.gaussian_radius" => c.edge.gaussian_radius = parse_value(key, value)?,
            "prompt.small_max" => c.prompt.scale.small_max = parse_value(key, value)?,
            "prompt.large_min" => c.prompt.scale.large_min = parse_value(key, value)?,
            "prompt.count_threshold" => c.prompt.count_threshold = parse_value(key, value)?,
            "prompt.spread_threshold" => c.prompt.spread_threshold = parse_value(key, value)?,
            "embed.dim" => c.embed_dim = parse_value(key, value)?,
            "embed.seed" => c.embed_seed = parse_value(key, value)?,
            "depth.sigma" => self.depth.sigma = parse_value(key, value)?,
            "depth.radius" => self.depth.radius = parse_value(key, value)?,
            "diffusion.train_steps" => self.diffusion.train_steps = parse_value(key, value)?,
            "diffusion.beta_start" => self.diffusion.beta_start = parse_value(key, value)?,
            "diffusion.beta_end" => self.diffusion.beta_end = parse_value(key, value)?,
            "diffusion.sample_steps" => self.diffusion.sample_steps = parse_value(key, value)?,
            "diffusion.latent_size" => self.diffusion.latent_size = parse_value(key, value)?,
            "diffusion.latent_channels" => self.diffusion.latent_channels = parse_value(key, value)?,
            "ssim.c1" => self.ssim.c1 = parse_value(key, value)?,
            "ssim.c2" => self.ssim.c2 = parse_value(key, value)?,
            "ssim.window_size" => self.ssim.window_size = parse_value(key, value)?,
            "ssim.gaussian_sigma" => {
                let sigma: f64 = parse_value(key, value)?;
                self.ssim.window = if sigma == 0.0 { SsimWindow::Uniform } else { SsimWindow::Gaussian { sigma } };
            }
            "ssim.global" => self.ssim.global = parse_value(key, value)?,
            "ssim.max_val" => self.ssim.max_val = parse_value(key, value)?,
            "eval.iou" => self.eval.iou = value.to_string(),
            "eval.ap_method" => self.eval.ap_method = parse_ap_method(value)?,
            "eval.pr_iou" => self.eval.pr_iou = parse_value(key, value)?,
            "dataset.train_ratio" => self.train_ratio = parse_value(key, value)?,
            other => return Err(Error::Parse(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Starts from the defaults and applies each line in order; a repeated
    /// key keeps its last value. The result is validated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::Parse(format!("config line {}: expected key = value", i + 1)))?;
            s.set(key.trim(), value.trim()).map_err(|e| Error::Parse(format!("config line {}: {e}", i + 1)))?;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }

    /// Uses `explicit` when given, else the path in `PCBDEFECT_CONFIG`, else
    /// the defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        let from_env = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        match explicit.map(Path::to_path_buf).or(from_env) {
            Some(p) => Self::read(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.conditions;
        c.edge.validate()?;
        ScaleThresholds::new(c.prompt.scale.small_max, c.prompt.scale.large_min)?;
        if c.embed_dim == 0 {
            return Err(invalid("embed.dim must be positive"));
        }
        if !(self.depth.sigma > 0.0) {
            return Err(invalid("depth.sigma must be positive"));
        }
        let d = &self.diffusion;
        if d.sample_steps == 0 || d.sample_steps > d.train_steps {
            return Err(invalid(format!("diffusion.sample_steps must lie in 1..={}", d.train_steps)));
        }
        if d.latent_size == 0 || d.latent_channels == 0 {
            return Err(invalid("diffusion latent size and channels must be positive"));
        }
        self.ssim.validate()?;
        self.eval.thresholds()?;
        if !(self.eval.pr_iou > 0.0 && self.eval.pr_iou <= 1.0) {
            return Err(invalid("eval.pr_iou must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.train_ratio) {
            return Err(invalid("dataset.train_ratio must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Writes every key in the same format [`Settings::parse`] reads.
    pub fn to_text(&self) -> String {
        let c = &self.conditions;
        let sigma = match self.ssim.window {
            SsimWindow::Uniform => 0.0,
            SsimWindow::Gaussian { sigma } => sigma,
        };
        let method = match self.eval.ap_method {
            ApMethod::Interp101 => "interp101",
            ApMethod::AllPoint => "all_point",
        };
        let values: Vec<String> = vec![
            self.seed.to_string(),
            c.edge.low_factor.to_string(),
            c.edge.high_factor.to_string(),
            c.edge.gaussian_sigma.to_string(),
            c.edge.gaussian_radius.to_string(),
            c.prompt.scale.small_max.to_string(),
            c.prompt.scale.large_min.to_string(),
            c.prompt.count_threshold.to_string(),
            c.prompt.spread_threshold.to_string(),
            c.embed_dim.to_string(),
            c.embed_seed.to_string(),
            self.depth.sigma.to_string(),
            self.depth.radius.to_string(),
            self.diffusion.train_steps.to_string(),
            self.diffusion.beta_start.to_string(),
            self.diffusion.beta_end.to_string(),
            self.diffusion.sample_steps.to_string(),
            self.diffusion.latent_size.to_string(),
            self.diffusion.latent_channels.to_string(),
            self.ssim.c1.to_string(),
            self.ssim.c2.to_string(),
            self.ssim.window_size.to_string(),
            sigma.to_string(),
            self.ssim.global.to_string(),
            self.ssim.max_val.to_string(),
            self.eval.iou.clone(),
            method.to_string(),
            self.eval.pr_iou.to_string(),
            self.train_ratio.to_string(),
        ];
        KEYS.iter().zip(values).map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(Settings::parse("# nothing\n\n").unwrap(), Settings::default());
    }

    #[test]
    fn keys_override_defaults() {
        let s = Settings::parse("seed = 9\nedge.low_factor=0.4\nssim.gaussian_sigma = 1.5\neval.ap_method = all_point\n").unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.conditions.edge.low_factor, 0.4);
        assert_eq!(s.ssim.window, SsimWindow::Gaussian { sigma: 1.5 });
        assert_eq!(s.eval.ap_method, ApMethod::AllPoint);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert!(Settings::parse("edge.low = 0.4").is_err());
        assert!(Settings::parse("seed = -1").is_err());
        assert!(Settings::parse("no equals sign").is_err());
        assert!(Settings::parse("edge.low_factor = 2.0").is_err());
        assert!(Settings::parse("diffusion.sample_steps = 60").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut s = Settings::default();
        s.seed = 31;
        s.eval.iou = "0.5".into();
        s.ssim.window = SsimWindow::Gaussian { sigma: 1.5 };
        s.diffusion.beta_end = 0.0123;
        let text = s.to_text();
        assert_eq!(text.lines().count(), KEYS.len());
        assert_eq!(Settings::parse(&text).unwrap(), s);
    }

    #[test]
    fn every_listed_key_is_accepted() {
        let text = Settings::default().to_text();
        for line in text.lines() {
            let (k, v) = line.split_once(" = ").unwrap();
            Settings::default().set(k, v).unwrap();
        }
    }
}
