//! Per-class image and defect counts. An image counts once for every class
//! present in it; a defect counts once per instance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::manifest::DatasetManifest;
use crate::defect::DefectClass;

/// Counts keyed by class in canonical class order; every class is present,
/// zero or not.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub images: BTreeMap<DefectClass, usize>,
    pub defects: BTreeMap<DefectClass, usize>,
    pub total_images: usize,
    pub total_defects: usize,
}

impl DatasetStats {
    pub fn zeros() -> Self {
        let z: BTreeMap<_, _> = DefectClass::ALL.iter().map(|&c| (c, 0)).collect();
        Self { images: z.clone(), defects: z, total_images: 0, total_defects: 0 }
    }

    pub fn image_count(&self, class: DefectClass) -> usize {
        self.images[&class]
    }

    pub fn defect_count(&self, class: DefectClass) -> usize {
        self.defects[&class]
    }
}

pub fn dataset_stats(m: &DatasetManifest) -> DatasetStats {
    let mut s = DatasetStats::zeros();
    for e in m.entries() {
        s.total_images += 1;
        for inst in &e.instances {
            *s.defects.get_mut(&inst.class).expect("all classes present") += 1;
            s.total_defects += 1;
        }
        for c in DefectClass::ALL {
            if e.has_class(c) {
                *s.images.get_mut(&c).expect("all classes present") += 1;
            }
        }
    }
    s
}
