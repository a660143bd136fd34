//! Text branch: per-defect scale, grid location and distribution, slotted
//! into a versioned template library.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::defect::{BBox, DefectClass, DefectInstance};
use crate::error::{invalid, io_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleClass {
    Small,
    Medium,
    Large,
}

impl ScaleClass {
    pub fn word(self) -> &'static str {
        match self {
            Self::Small => "small",
            Self::Medium => "medium",
            Self::Large => "large",
        }
    }
}

/// Area thresholds in px²: `area < small_max` is small, `area > large_min`
/// is large, anything in between (inclusive) is medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleThresholds {
    pub small_max: f64,
    pub large_min: f64,
}

impl Default for ScaleThresholds {
    fn default() -> Self {
        Self { small_max: 32.0 * 32.0, large_min: 96.0 * 96.0 }
    }
}

impl ScaleThresholds {
    pub fn new(small_max: f64, large_min: f64) -> Result<Self> {
        if !(small_max < large_min) {
            return Err(invalid(format!("scale thresholds must satisfy t1 < t2, got {small_max} and {large_min}")));
        }
        Ok(Self { small_max, large_min })
    }
}

pub fn classify_scale(bbox: &BBox, t: ScaleThresholds) -> ScaleClass {
    let area = bbox.area();
    if area < t.small_max {
        ScaleClass::Small
    } else if area <= t.large_min {
        ScaleClass::Medium
    } else {
        ScaleClass::Large
    }
}

/// Cells of the 3x3 location grid in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridCell {
    TopLeft,
    Top,
    TopRight,
    Left,
    Center,
    Right,
    BottomLeft,
    Bottom,
    BottomRight,
}

impl GridCell {
    pub const ALL: [GridCell; 9] = [
        GridCell::TopLeft,
        GridCell::Top,
        GridCell::TopRight,
        GridCell::Left,
        GridCell::Center,
        GridCell::Right,
        GridCell::BottomLeft,
        GridCell::Bottom,
        GridCell::BottomRight,
    ];

    pub fn from_row_col(row: usize, col: usize) -> Self {
        Self::ALL[row * 3 + col]
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::TopLeft => "top-left",
            Self::Top => "top",
            Self::TopRight => "top-right",
            Self::Left => "left",
            Self::Center => "center",
            Self::Right => "right",
            Self::BottomLeft => "bottom-left",
            Self::Bottom => "bottom",
            Self::BottomRight => "bottom-right",
        }
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Maps a normalized center in `[0, 1]²` to its grid cell; the upper edge
/// of the unit square belongs to the last row/column.
pub fn locate_cell(cx: f64, cy: f64) -> Result<GridCell> {
    if !(0.0..=1.0).contains(&cx) || !(0.0..=1.0).contains(&cy) {
        return Err(invalid(format!("normalized center ({cx}, {cy}) outside [0,1]²")));
    }
    let col = ((3.0 * cx).floor() as usize).min(2);
    let row = ((3.0 * cy).floor() as usize).min(2);
    Ok(GridCell::from_row_col(row, col))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptMode {
    InstanceLevel,
    RegionLevel,
}

/// The slot values of one prompt clause.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub category: DefectClass,
    pub scale: ScaleClass,
    pub location: GridCell,
    pub quantity: usize,
    pub mode: PromptMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub scale: ScaleThresholds,
    /// More defects than this switch the prompt to region level.
    pub count_threshold: usize,
    /// Region-level prompts call the layout scattered when at least this
    /// many grid cells are occupied.
    pub spread_threshold: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self { scale: ScaleThresholds::default(), count_threshold: 6, spread_threshold: 5 }
    }
}

/// Sentence templates. Placeholders: `{quantity}`, `{scale}`, `{category}`,
/// `{location}`, `{distribution}` and `{plural}` (`s` unless the quantity
/// is one).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateLibrary {
    pub version: u32,
    pub prefix: String,
    pub instance: String,
    pub region: String,
    pub distribution: String,
}

/// The library shipped with the crate.
pub const DEFAULT_TEMPLATES: &str = include_str!("../../data/templates.txt");

impl Default for TemplateLibrary {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATES).expect("bundled template library parses")
    }
}

impl TemplateLibrary {
    /// Parses `key = template` lines; blank lines and `#` comments are
    /// skipped. Keys: `version`, `prefix`, `instance`, `region`,
    /// `distribution`, all required.
    pub fn parse(text: &str) -> Result<Self> {
        let (mut version, mut prefix, mut instance, mut region, mut distribution) = (None, None, None, None, None);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("template line {}: expected `key = template`", i + 1)))?;
            let value = value.trim().to_string();
            match key.trim() {
                "version" => {
                    version = Some(value.parse::<u32>().map_err(|e| Error::Parse(format!("template version: {e}")))?)
                }
                "prefix" => prefix = Some(value),
                "instance" => instance = Some(value),
                "region" => region = Some(value),
                "distribution" => distribution = Some(value),
                other => return Err(Error::Parse(format!("template line {}: unknown key {other:?}", i + 1))),
            }
        }
        let need = |v: Option<String>, k: &str| v.ok_or_else(|| Error::Parse(format!("template library lacks `{k}`")));
        Ok(Self {
            version: version.ok_or_else(|| Error::Parse("template library lacks `version`".into()))?,
            prefix: need(prefix, "prefix")?,
            instance: need(instance, "instance")?,
            region: need(region, "region")?,
            distribution: need(distribution, "distribution")?,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }
}

fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in slots {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

fn join_clauses(clauses: &[String]) -> String {
    match clauses {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Structured description of a defect set, before rendering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPlan {
    pub mode: PromptMode,
    pub clauses: Vec<PromptSpec>,
    pub occupied_cells: usize,
    pub scattered: bool,
}

pub fn plan_prompt(instances: &[DefectInstance], width: usize, height: usize, cfg: &PromptConfig) -> Result<PromptPlan> {
    if instances.is_empty() {
        return Err(invalid("cannot build a prompt from zero defects"));
    }
    if width == 0 || height == 0 {
        return Err(invalid("image dimensions must be positive"));
    }
    let mut cells = Vec::with_capacity(instances.len());
    for inst in instances {
        inst.validate(width, height)?;
        let (cx, cy) = inst.bbox.center();
        cells.push(locate_cell(cx / width as f64, cy / height as f64)?);
    }
    let occupied = cells.iter().collect::<BTreeSet<_>>().len();
    let scattered = occupied >= cfg.spread_threshold;

    if instances.len() <= cfg.count_threshold {
        let clauses = instances
            .iter()
            .zip(&cells)
            .map(|(inst, &location)| PromptSpec {
                category: inst.class,
                scale: classify_scale(&inst.bbox, cfg.scale),
                location,
                quantity: 1,
                mode: PromptMode::InstanceLevel,
            })
            .collect();
        return Ok(PromptPlan { mode: PromptMode::InstanceLevel, clauses, occupied_cells: occupied, scattered });
    }

    // Region level: one clause per category in order of first appearance,
    // carrying the dominant scale and the cell of the mean center.
    let mut order: Vec<DefectClass> = Vec::new();
    for inst in instances {
        if !order.contains(&inst.class) {
            order.push(inst.class);
        }
    }
    let clauses = order
        .into_iter()
        .map(|category| {
            let members: Vec<&DefectInstance> = instances.iter().filter(|i| i.class == category).collect();
            let mut counts = [0usize; 3];
            for m in &members {
                counts[classify_scale(&m.bbox, cfg.scale) as usize] += 1;
            }
            let dominant = (0..3).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap();
            let scale = [ScaleClass::Small, ScaleClass::Medium, ScaleClass::Large][dominant];
            let k = members.len() as f64;
            let mx = members.iter().map(|m| m.bbox.center().0).sum::<f64>() / k / width as f64;
            let my = members.iter().map(|m| m.bbox.center().1).sum::<f64>() / k / height as f64;
            PromptSpec {
                category,
                scale,
                location: locate_cell(mx.clamp(0.0, 1.0), my.clamp(0.0, 1.0)).expect("clamped into range"),
                quantity: members.len(),
                mode: PromptMode::RegionLevel,
            }
        })
        .collect();
    Ok(PromptPlan { mode: PromptMode::RegionLevel, clauses, occupied_cells: occupied, scattered })
}

pub fn render_prompt(plan: &PromptPlan, templates: &TemplateLibrary) -> String {
    let clauses: Vec<String> = plan
        .clauses
        .iter()
        .map(|c| {
            let quantity = c.quantity.to_string();
            let slots = [
                ("quantity", quantity.as_str()),
                ("scale", c.scale.word()),
                ("category", c.category.name()),
                ("location", c.location.name()),
                ("plural", if c.quantity == 1 { "" } else { "s" }),
            ];
            match plan.mode {
                PromptMode::InstanceLevel => fill(&templates.instance, &slots),
                PromptMode::RegionLevel => fill(&templates.region, &slots),
            }
        })
        .collect();
    let mut out = format!("{} {}", templates.prefix, join_clauses(&clauses));
    if plan.mode == PromptMode::RegionLevel {
        let word = if plan.scattered { "scattered" } else { "locally clustered" };
        out.push(' ');
        out.push_str(&fill(&templates.distribution, &[("distribution", word)]));
    }
    out
}

/// Builds the prompt for one image's defects.
pub fn build_prompt(
    instances: &[DefectInstance],
    width: usize,
    height: usize,
    cfg: &PromptConfig,
    templates: &TemplateLibrary,
) -> Result<String> {
    Ok(render_prompt(&plan_prompt(instances, width, height, cfg)?, templates))
}
