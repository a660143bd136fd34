use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Args;
use pcbdefect::condgen::prompt::{plan_prompt, render_prompt, PromptMode};
use pcbdefect::condgen::{generate_conditions, TemplateLibrary};
use pcbdefect::config::Settings;
use pcbdefect::defect::{read_jsonl, DefectInstance, DetectionRecord};
use pcbdefect::image::GrayImage;
use serde::Serialize;

use super::emit;

#[derive(Debug, Args)]
pub struct ConditionsArgs {
    /// Grayscale PGM or PNG image.
    #[arg(long)]
    pub image: PathBuf,
    /// JSON Lines defect records `{image_id, class, bbox}`.
    #[arg(long)]
    pub instances: PathBuf,
    /// Record key to select; defaults to the image file stem.
    #[arg(long)]
    pub image_id: Option<String>,
    /// Prompt template library; the bundled one when omitted.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Directory receiving edge.pgm, depth.txt, condition_map.txt,
    /// prompt.txt and embedding.txt.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    /// JSON Lines defect records `{image_id, class, bbox}`.
    #[arg(long)]
    pub instances: PathBuf,
    /// Only use records with this key; all records when omitted.
    #[arg(long)]
    pub image_id: Option<String>,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Also write the bare prompt text here, for `diffuse --prompt-file`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn load_templates(path: Option<&Path>) -> anyhow::Result<TemplateLibrary> {
    Ok(match path {
        Some(p) => TemplateLibrary::load(p)?,
        None => TemplateLibrary::default(),
    })
}

pub fn select_instances(path: &Path, image_id: Option<&str>) -> anyhow::Result<Vec<DefectInstance>> {
    let records: Vec<DetectionRecord> = read_jsonl(path)?;
    let chosen: Vec<DefectInstance> =
        records.iter().filter(|r| image_id.is_none_or(|id| r.image_id == id)).map(DetectionRecord::instance).collect();
    if chosen.is_empty() {
        bail!("no defect records for {} in {}", image_id.unwrap_or("any image"), path.display());
    }
    Ok(chosen)
}

#[derive(Serialize)]
struct ConditionsReport {
    image: String,
    width: usize,
    height: usize,
    defects: usize,
    edge_pixels: usize,
    prompt: String,
    files: Vec<String>,
}

pub fn run_conditions(a: &ConditionsArgs, s: &Settings) -> anyhow::Result<ExitCode> {
    let img = GrayImage::load(&a.image)?;
    let stem = a.image.file_stem().and_then(|v| v.to_str()).unwrap_or_default().to_string();
    let id = a.image_id.clone().unwrap_or(stem);
    let instances = select_instances(&a.instances, Some(&id))?;
    let templates = load_templates(a.templates.as_deref())?;
    let cs = generate_conditions(&img, &instances, &s.conditions, &templates, &s.depth)?;

    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let path = |name: &str| a.out_dir.join(name);
    cs.edge.write_pgm(path("edge.pgm"))?;
    cs.depth.write_text(path("depth.txt"))?;
    cs.condition_map()?.write_text(path("condition_map.txt"))?;
    std::fs::write(path("prompt.txt"), format!("{}\n", cs.prompt))?;
    cs.text_embedding.write_text(path("embedding.txt"))?;

    let files = ["edge.pgm", "depth.txt", "condition_map.txt", "prompt.txt", "embedding.txt"];
    emit(&ConditionsReport {
        image: id,
        width: img.width(),
        height: img.height(),
        defects: instances.len(),
        edge_pixels: cs.edge.data().iter().filter(|&&v| v > 0).count(),
        prompt: cs.prompt,
        files: files.iter().map(|f| path(f).display().to_string()).collect(),
    })
}

#[derive(Serialize)]
struct PromptReport {
    prompt: String,
    mode: PromptMode,
    defects: usize,
    occupied_cells: usize,
}

pub fn run_prompt(a: &PromptArgs, s: &Settings) -> anyhow::Result<ExitCode> {
    let instances = select_instances(&a.instances, a.image_id.as_deref())?;
    let templates = load_templates(a.templates.as_deref())?;
    let plan = plan_prompt(&instances, a.width, a.height, &s.conditions.prompt)?;
    let prompt = render_prompt(&plan, &templates);
    if let Some(out) = &a.out {
        std::fs::write(out, format!("{prompt}\n")).with_context(|| format!("writing {}", out.display()))?;
    }
    emit(&PromptReport { prompt, mode: plan.mode, defects: instances.len(), occupied_cells: plan.occupied_cells })
}
