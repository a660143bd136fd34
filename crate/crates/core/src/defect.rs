//! Defect categories, boxes and the JSON Lines record shared by the prompt
//! builder, the dataset manifest and detection evaluation.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{invalid, io_err, Error, Result};

/// The six PCB defect categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", try_from = "ClassRepr")]
pub enum DefectClass {
    Short,
    Spur,
    SpuriousCopper,
    Open,
    MouseBite,
    HoleBreakout,
}

impl DefectClass {
    pub const ALL: [DefectClass; 6] = [
        DefectClass::Short,
        DefectClass::Spur,
        DefectClass::SpuriousCopper,
        DefectClass::Open,
        DefectClass::MouseBite,
        DefectClass::HoleBreakout,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Snake-case identifier used in files.
    pub fn key(self) -> &'static str {
        match self {
            Self::Short => "short",
            Self::Spur => "spur",
            Self::SpuriousCopper => "spurious_copper",
            Self::Open => "open",
            Self::MouseBite => "mouse_bite",
            Self::HoleBreakout => "hole_breakout",
        }
    }

    /// Human-readable name used in prompts.
    pub fn name(self) -> &'static str {
        match self {
            Self::Short => "short",
            Self::Spur => "spur",
            Self::SpuriousCopper => "spurious copper",
            Self::Open => "open",
            Self::MouseBite => "mouse bite",
            Self::HoleBreakout => "hole breakout",
        }
    }
}

impl fmt::Display for DefectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for DefectClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Self::ALL
            .into_iter()
            .find(|c| c.key() == norm)
            .ok_or_else(|| invalid(format!("unknown defect class {s:?}")))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ClassRepr {
    Index(usize),
    Name(String),
}

impl TryFrom<ClassRepr> for DefectClass {
    type Error = Error;

    fn try_from(r: ClassRepr) -> Result<Self> {
        match r {
            ClassRepr::Index(i) => Self::from_index(i).ok_or_else(|| invalid(format!("class index {i} out of range 0..6"))),
            ClassRepr::Name(s) => s.parse(),
        }
    }
}

/// Axis-aligned box `(x, y, w, h)` in pixels, top-left origin. Serialized as
/// a four-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        Self { x, y, w, h }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w > 0.0 && self.h > 0.0) || !self.x.is_finite() || !self.y.is_finite() {
            return Err(invalid(format!("box {self:?} needs finite origin and positive extent")));
        }
        Ok(())
    }

    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x + self.w <= width && self.y + self.h <= height
    }
}

/// One labelled defect inside an image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefectInstance {
    pub class: DefectClass,
    pub bbox: BBox,
}

impl DefectInstance {
    pub fn new(class: DefectClass, bbox: BBox) -> Self {
        Self { class, bbox }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        self.bbox.validate()?;
        if !self.bbox.within(width as f64, height as f64) {
            return Err(invalid(format!("box {:?} leaves the {width}x{height} image", self.bbox)));
        }
        Ok(())
    }
}

/// A ground-truth or predicted box keyed by image; `score` is present only
/// on predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub class: DefectClass,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl DetectionRecord {
    pub fn instance(&self) -> DefectInstance {
        DefectInstance::new(self.class, self.bbox)
    }

    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(invalid(format!("score {s} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    parse_jsonl(std::io::BufReader::new(file))
}

pub fn parse_jsonl<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err("<jsonl stream>"))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n").expect("writing to Vec");
    }
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_jsonl(items)?).map_err(io_err(path))
}
