//! The manifest: one JSON object per image, carrying its path, size,
//! split, labelled defects and, for derived images, where it came from.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::augment::AugmentOp;
use crate::defect::{parse_jsonl, read_jsonl, to_jsonl, write_jsonl, DefectClass, DefectInstance};
use crate::error::{invalid, Result};
use crate::init::seeded_rng;

/// Fraction of images assigned to training by [`assign_splits`].
pub const DEFAULT_TRAIN_RATIO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

/// Where a derived entry came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "snake_case")]
pub enum Provenance {
    /// A traditional augmentation of an original image.
    Augmented { source: String, op: AugmentOp },
    /// An image produced outside this crate, for example by the diffusion
    /// generator, labelled by whatever process the producer used.
    Synthetic { generator: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: String,
    pub width: usize,
    pub height: usize,
    pub split: Split,
    #[serde(default)]
    pub instances: Vec<DefectInstance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl ManifestEntry {
    pub fn has_class(&self, class: DefectClass) -> bool {
        self.instances.iter().any(|i| i.class == class)
    }

    pub fn is_original(&self) -> bool {
        self.provenance.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        if self.image.is_empty() {
            return Err(invalid("manifest entry with an empty image path"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(invalid(format!("{}: zero image size", self.image)));
        }
        for inst in &self.instances {
            inst.validate(self.width, self.height).map_err(|e| invalid(format!("{}: {e}", self.image)))?;
        }
        Ok(())
    }
}

/// An ordered list of entries with unique image paths. The train ratio is
/// configuration, not file content: it is what [`assign_splits`] aims for
/// and what [`DatasetManifest::split_ratio_ok`] checks against.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
    train_ratio: f64,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        Self::with_ratio(entries, DEFAULT_TRAIN_RATIO)
    }

    pub fn with_ratio(entries: Vec<ManifestEntry>, train_ratio: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&train_ratio) {
            return Err(invalid(format!("train ratio {train_ratio} outside [0, 1]")));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            e.validate()?;
            if !seen.insert(e.image.as_str()) {
                return Err(invalid(format!("duplicate image path {}", e.image)));
            }
        }
        Ok(Self { entries, train_ratio })
    }

    pub fn empty() -> Self {
        Self { entries: Vec::new(), train_ratio: DEFAULT_TRAIN_RATIO }
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<ManifestEntry> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn train_ratio(&self) -> f64 {
        self.train_ratio
    }

    pub fn contains(&self, image: &str) -> bool {
        self.entries.iter().any(|e| e.image == image)
    }

    pub fn count_split(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    /// True when the training count is within one image of
    /// `ratio * len`, the slack rounding allows.
    pub fn split_ratio_ok(&self) -> bool {
        let target = self.train_ratio * self.len() as f64;
        (self.count_split(Split::Train) as f64 - target).abs() <= 1.0
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(parse_jsonl(text.as_bytes())?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(read_jsonl(path)?)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        to_jsonl(&self.entries)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_jsonl(path, &self.entries)
    }
}

/// Shuffles entry indices with `seed` and marks the first
/// `round(ratio * n)` as training, the rest as validation. Entry order is
/// left untouched.
pub fn assign_splits(m: &DatasetManifest, seed: u64) -> DatasetManifest {
    let n = m.len();
    let n_train = (m.train_ratio * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(seed));
    let mut entries = m.entries.clone();
    for (rank, &i) in order.iter().enumerate() {
        entries[i].split = if rank < n_train { Split::Train } else { Split::Val };
    }
    DatasetManifest { entries, train_ratio: m.train_ratio }
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::super::test_entry as entry;
    use crate::defect::BBox;

    #[test]
    fn rejects_duplicate_paths() {
        let e = entry("a.png", &[DefectClass::Open]);
        assert!(DatasetManifest::new(vec![e.clone(), e]).is_err());
    }

    #[test]
    fn rejects_out_of_bounds_boxes() {
        let mut e = entry("a.png", &[DefectClass::Open]);
        e.instances[0].bbox = BBox::new(30.0, 0.0, 5.0, 5.0);
        assert!(DatasetManifest::new(vec![e]).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let mut derived = entry("b_ext1_0.png", &[DefectClass::Short]);
        derived.split = Split::Val;
        derived.provenance = Some(Provenance::Augmented { source: "b.png".into(), op: AugmentOp::Rotate90 { k: 3 } });
        let m = DatasetManifest::new(vec![entry("b.png", &[DefectClass::Short, DefectClass::Spur]), derived]).unwrap();
        let text = m.to_jsonl().unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(DatasetManifest::parse(&text).unwrap(), m);
    }

    #[test]
    fn splits_follow_ratio_and_seed() {
        let entries = (0..23).map(|i| entry(&format!("{i}.png"), &[])).collect();
        let m = DatasetManifest::new(entries).unwrap();
        let a = assign_splits(&m, 5);
        assert_eq!(a.count_split(Split::Train), 18);
        assert!(a.split_ratio_ok());
        assert_eq!(a, assign_splits(&m, 5));
        assert_ne!(a, assign_splits(&m, 6));
    }
}
