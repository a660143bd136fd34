use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use pcbdefect::config::Settings;
use pcbdefect::defect::{read_jsonl, DefectClass, DetectionRecord};
use pcbdefect::image::GrayImage;
use pcbdefect::metrics::{
    fid, gradient_pyramid, lpips_form, mean_ap, parse_iou_spec, pr_at_best_f1, psnr, read_features_csv, ssim, ApMethod,
    FeatureStats, LpipsLayer,
};
use rayon::prelude::*;
use serde::Serialize;

use super::emit;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ApFlag {
    Interp101,
    AllPoint,
}

impl From<ApFlag> for ApMethod {
    fn from(f: ApFlag) -> Self {
        match f {
            ApFlag::Interp101 => ApMethod::Interp101,
            ApFlag::AllPoint => ApMethod::AllPoint,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalDetArgs {
    /// Predicted boxes, JSON Lines with `score`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth boxes, JSON Lines.
    #[arg(long)]
    pub gt: PathBuf,
    /// IoU thresholds for the averaged mAP: `0.5` or `0.5:0.95`.
    #[arg(long)]
    pub iou: Option<String>,
    #[arg(long, value_enum)]
    pub ap_method: Option<ApFlag>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ClassReport {
    pub class: DefectClass,
    pub num_gt: usize,
    pub ap50: f64,
    pub ap_range: f64,
}

/// Detection report. Precision and recall are taken at the score
/// threshold with the highest F1, which `prOperatingPoint` states.
#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DetReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub score_threshold: f64,
    pub pr_operating_point: &'static str,
    pub pr_iou: f64,
    pub map50: f64,
    pub map5095: f64,
    pub iou_thresholds: Vec<f64>,
    pub ap_method: &'static str,
    pub per_class: Vec<ClassReport>,
}

pub fn det_report(preds: &[DetectionRecord], gts: &[DetectionRecord], thresholds: &[f64], method: ApMethod, pr_iou: f64) -> anyhow::Result<DetReport> {
    let map = mean_ap(preds, gts, &DefectClass::ALL, thresholds, method)?;
    let pr = pr_at_best_f1(preds, gts, pr_iou)?;
    Ok(DetReport {
        precision: pr.precision,
        recall: pr.recall,
        f1: pr.f1,
        score_threshold: pr.score_threshold,
        pr_operating_point: "max_f1",
        pr_iou,
        map50: map.map50,
        map5095: map.map5095,
        iou_thresholds: map.thresholds,
        ap_method: match method {
            ApMethod::Interp101 => "interp101",
            ApMethod::AllPoint => "all_point",
        },
        per_class: map
            .per_class
            .into_iter()
            .map(|c| ClassReport { class: c.class, num_gt: c.num_gt, ap50: c.ap50, ap_range: c.ap_range })
            .collect(),
    })
}

pub fn run_det(a: &EvalDetArgs, s: &Settings) -> anyhow::Result<ExitCode> {
    let preds: Vec<DetectionRecord> = read_jsonl(&a.pred)?;
    let gts: Vec<DetectionRecord> = read_jsonl(&a.gt)?;
    let thresholds = parse_iou_spec(a.iou.as_deref().unwrap_or(&s.eval.iou))?;
    let method = a.ap_method.map(ApMethod::from).unwrap_or(s.eval.ap_method);
    emit(&det_report(&preds, &gts, &thresholds, method, s.eval.pr_iou)?)
}

#[derive(Debug, Args)]
pub struct EvalGenArgs {
    /// Feature vectors of real images, CSV with a `dim: d` header.
    #[arg(long, requires = "gen_feats")]
    pub real_feats: Option<PathBuf>,
    /// Feature vectors of generated images, same format.
    #[arg(long, requires = "real_feats")]
    pub gen_feats: Option<PathBuf>,
    /// Directory with `real/` and `gen/` subdirectories holding images
    /// paired by file name.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Pyramid levels for the LPIPS-form distance.
    #[arg(long, default_value_t = 3)]
    pub lpips_levels: usize,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GenReport {
    pub fid: Option<f64>,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub lpips_form: Option<f64>,
    pub pairs: usize,
}

fn list_images(dir: &Path) -> anyhow::Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let is_image = path.extension().and_then(|e| e.to_str()).is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm"));
        if is_image {
            out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), path);
        }
    }
    Ok(out)
}

/// Loads the pairs in file-name order.
pub fn load_pairs(dir: &Path) -> anyhow::Result<Vec<(GrayImage, GrayImage)>> {
    let real = list_images(&dir.join("real"))?;
    let gen = list_images(&dir.join("gen"))?;
    if real.is_empty() {
        bail!("{} holds no images", dir.join("real").display());
    }
    if real.keys().ne(gen.keys()) {
        bail!("real/ and gen/ under {} must hold the same file names", dir.display());
    }
    real.iter().map(|(name, p)| Ok((GrayImage::load(p)?, GrayImage::load(&gen[name])?))).collect()
}

/// Means of PSNR, SSIM and the LPIPS form over image pairs. Pairs are
/// scored in parallel and reduced in input order.
pub fn pair_metrics(pairs: &[(GrayImage, GrayImage)], s: &Settings, lpips_levels: usize) -> anyhow::Result<(f64, f64, f64)> {
    let scores = pairs
        .par_iter()
        .map(|(r, g)| -> anyhow::Result<(f64, f64, f64)> {
            let (x, y) = (r.to_tensor(1.0), g.to_tensor(1.0));
            let p = psnr(&x, &y, s.ssim.max_val)?;
            let q = ssim(&x, &y, &s.ssim)?;
            let layers = gradient_pyramid(&r.to_tensor(255.0), lpips_levels)?
                .into_iter()
                .zip(gradient_pyramid(&g.to_tensor(255.0), lpips_levels)?)
                .map(|(x, y)| LpipsLayer { x, y, weight: 1.0 })
                .collect::<Vec<_>>();
            Ok((p, q, lpips_form(&layers)?))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let n = scores.len() as f64;
    let mean = |f: fn(&(f64, f64, f64)) -> f64| scores.iter().map(f).sum::<f64>() / n;
    Ok((mean(|t| t.0), mean(|t| t.1), mean(|t| t.2)))
}

pub fn run_gen(a: &EvalGenArgs, s: &Settings) -> anyhow::Result<ExitCode> {
    if a.real_feats.is_none() && a.pairs.is_none() {
        bail!("give --real-feats with --gen-feats, --pairs, or both");
    }
    let fid_value = match (&a.real_feats, &a.gen_feats) {
        (Some(r), Some(g)) => Some(fid(
            &FeatureStats::from_features(&read_features_csv(r)?)?,
            &FeatureStats::from_features(&read_features_csv(g)?)?,
        )?),
        _ => None,
    };
    let (mut report, pairs) = (GenReport { fid: fid_value, psnr: None, ssim: None, lpips_form: None, pairs: 0 }, &a.pairs);
    if let Some(dir) = pairs {
        let loaded = load_pairs(dir)?;
        let (p, q, l) = pair_metrics(&loaded, s, a.lpips_levels)?;
        // PSNR of identical images is infinite, which JSON cannot carry
        report.psnr = p.is_finite().then_some(p);
        report.ssim = Some(q);
        report.lpips_form = Some(l);
        report.pairs = loaded.len();
    }
    emit(&report)
}
