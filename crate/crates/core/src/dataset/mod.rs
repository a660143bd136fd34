//! Dataset bookkeeping: the JSON Lines manifest, per-class statistics, the
//! flip/rotate/blur expansion and the merge step for externally generated
//! images.

pub mod augment;
pub mod extend;
pub mod manifest;
pub mod stats;

pub use augment::{apply_augment, random_op, AugmentOp, BLUR_SIGMA_RANGE};
pub use extend::{build_extend1, merge_synthetic, render_entries, ClassTargets};
pub use manifest::{assign_splits, DatasetManifest, ManifestEntry, Provenance, Split, DEFAULT_TRAIN_RATIO};
pub use stats::{dataset_stats, DatasetStats};

#[cfg(test)]
use crate::defect::{BBox, DefectClass, DefectInstance};

/// A 32x24 original training entry with one small box per listed class.
#[cfg(test)]
pub(crate) fn test_entry(name: &str, classes: &[DefectClass]) -> ManifestEntry {
    ManifestEntry {
        image: name.into(),
        width: 32,
        height: 24,
        split: Split::Train,
        instances: classes
            .iter()
            .enumerate()
            .map(|(i, &c)| DefectInstance::new(c, BBox::new(2.0 * i as f64, 1.0, 4.0, 3.0)))
            .collect(),
        provenance: None,
    }
}
