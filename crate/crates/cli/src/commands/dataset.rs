use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Args;
use pcbdefect::config::Settings;
use pcbdefect::dataset::{build_extend1, dataset_stats, merge_synthetic, render_entries, ClassTargets, DatasetManifest, DatasetStats, ManifestEntry};
use pcbdefect::defect::{read_jsonl, DefectClass};
use serde::Serialize;

use super::emit;

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Dataset manifest, JSON Lines.
    #[arg(long)]
    pub manifest: PathBuf,
}

pub fn run_stats(a: &StatsArgs) -> anyhow::Result<ExitCode> {
    emit(&dataset_stats(&DatasetManifest::read(&a.manifest)?))
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Source manifest, JSON Lines.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Per-class image targets such as `short=40,open=+5`; a leading `+`
    /// is relative to the current count. Unlisted classes keep their count.
    #[arg(long, default_value = "")]
    pub targets: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output manifest path.
    #[arg(long)]
    pub out: PathBuf,
    /// Externally generated entries to append after augmentation.
    #[arg(long)]
    pub merge: Option<PathBuf>,
    /// Root the manifest's image paths are relative to. With
    /// `--render-to`, augmented images are written out.
    #[arg(long, requires = "render_to")]
    pub images: Option<PathBuf>,
    #[arg(long, requires = "images")]
    pub render_to: Option<PathBuf>,
}

/// Parses `class=count` pairs separated by commas.
pub fn parse_targets(spec: &str, current: &DatasetStats) -> anyhow::Result<ClassTargets> {
    let mut out = ClassTargets::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, value) = part.split_once('=').with_context(|| format!("target {part:?} is not class=count"))?;
        let class: DefectClass = name.trim().parse()?;
        let value = value.trim();
        let count = match value.strip_prefix('+') {
            Some(delta) => current.image_count(class) + delta.parse::<usize>().with_context(|| format!("bad count in {part:?}"))?,
            None => value.parse().with_context(|| format!("bad count in {part:?}"))?,
        };
        if out.insert(class, count).is_some() {
            bail!("class {class} listed twice in targets");
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct AugmentReport {
    out: String,
    seed: u64,
    added: usize,
    merged: usize,
    rendered: Option<usize>,
    before: DatasetStats,
    after: DatasetStats,
}

pub fn run_augment(a: &AugmentArgs, s: &Settings) -> anyhow::Result<ExitCode> {
    let seed = a.seed.unwrap_or(s.seed);
    let source = DatasetManifest::with_ratio(DatasetManifest::read(&a.manifest)?.into_entries(), s.train_ratio)?;
    let before = dataset_stats(&source);
    let targets = parse_targets(&a.targets, &before)?;
    let extended = build_extend1(&source, &targets, seed)?;
    let added = extended.len() - source.len();
    let (result, merged) = match &a.merge {
        Some(p) => {
            let synthetic: Vec<ManifestEntry> = read_jsonl(p)?;
            let n = synthetic.len();
            (merge_synthetic(&extended, synthetic)?, n)
        }
        None => (extended, 0),
    };
    let rendered = match (&a.images, &a.render_to) {
        (Some(src), Some(dst)) => Some(render_entries(&result, src, dst)?),
        _ => None,
    };
    result.write(&a.out)?;
    emit(&AugmentReport {
        out: a.out.display().to_string(),
        seed,
        added,
        merged,
        rendered,
        before,
        after: dataset_stats(&result),
    })
}
