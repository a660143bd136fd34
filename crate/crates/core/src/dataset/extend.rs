//! Extend I (traditional augmentation up to per-class image targets) and
//! the merge step that admits externally generated images.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rayon::prelude::*;

use super::augment::{apply_augment, random_op};
use super::manifest::{DatasetManifest, ManifestEntry, Provenance};
use super::stats::dataset_stats;
use crate::defect::DefectClass;
use crate::error::{invalid, Result};
use crate::image::GrayImage;
use crate::init::seeded_rng;

/// Desired number of images containing each class. Classes left out keep
/// their current count as the target.
pub type ClassTargets = BTreeMap<DefectClass, usize>;

/// `dir/stem.ext` becomes `dir/stem_ext1_{n}.ext`.
fn derived_name(source: &str, n: usize) -> String {
    let p = Path::new(source);
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or(source);
    let file = match p.extension().and_then(|s| s.to_str()) {
        Some(ext) => format!("{stem}_ext1_{n}.{ext}"),
        None => format!("{stem}_ext1_{n}"),
    };
    p.with_file_name(file).to_string_lossy().into_owned()
}

/// Fills each class's image deficit with augmented copies of original
/// entries that contain the class. Classes are visited in canonical order
/// and the running count includes copies made for earlier classes, so a
/// copy carrying several classes can cover more than one deficit. Targets
/// act as lower bounds: a class may end above its target when copies made
/// for another class also contain it. Every copy inherits its source's
/// split and records the source path and op. Source entries are never
/// modified and keep their positions; new entries are appended.
pub fn build_extend1(m: &DatasetManifest, targets: &ClassTargets, seed: u64) -> Result<DatasetManifest> {
    let start = dataset_stats(m);
    for (&class, &target) in targets {
        let have = start.image_count(class);
        if target < have {
            return Err(invalid(format!("target {target} for {class} is below the current {have} images")));
        }
    }
    let originals: Vec<&ManifestEntry> = m.entries().iter().filter(|e| e.is_original()).collect();
    let mut taken: HashSet<String> = m.entries().iter().map(|e| e.image.clone()).collect();
    let mut counts = start.images.clone();
    let mut added = Vec::new();
    let mut rng = seeded_rng(seed);
    let mut serial = 0usize;

    for class in DefectClass::ALL {
        let Some(&target) = targets.get(&class) else { continue };
        let deficit = target.saturating_sub(counts[&class]);
        if deficit == 0 {
            continue;
        }
        let sources: Vec<&ManifestEntry> = originals.iter().copied().filter(|e| e.has_class(class)).collect();
        if sources.is_empty() {
            return Err(invalid(format!("no original image contains {class}; target {target} is unreachable")));
        }
        for _ in 0..deficit {
            let src = *sources.choose(&mut rng).expect("non-empty");
            let op = random_op(&mut rng);
            let (w, h) = op.output_size(src.width, src.height);
            let instances = src
                .instances
                .iter()
                .map(|i| crate::defect::DefectInstance::new(i.class, op.transform_box(&i.bbox, src.width, src.height)))
                .collect::<Vec<_>>();
            let name = loop {
                let candidate = derived_name(&src.image, serial);
                serial += 1;
                if taken.insert(candidate.clone()) {
                    break candidate;
                }
            };
            for c in DefectClass::ALL {
                if instances.iter().any(|i| i.class == c) {
                    *counts.get_mut(&c).expect("all classes present") += 1;
                }
            }
            added.push(ManifestEntry {
                image: name,
                width: w,
                height: h,
                split: src.split,
                instances,
                provenance: Some(Provenance::Augmented { source: src.image.clone(), op }),
            });
        }
    }

    let mut entries = m.entries().to_vec();
    entries.extend(added);
    DatasetManifest::with_ratio(entries, m.train_ratio())
}

/// Writes the pixels for every augmented entry: loads `src_root/source`,
/// applies the recorded op and saves to `dst_root/image`. Entries are
/// processed in parallel; the first error in manifest order is returned.
/// Returns the number of images written.
pub fn render_entries(m: &DatasetManifest, src_root: &Path, dst_root: &Path) -> Result<usize> {
    let jobs: Vec<(&ManifestEntry, &str, _)> = m
        .entries()
        .iter()
        .filter_map(|e| match &e.provenance {
            Some(Provenance::Augmented { source, op }) => Some((e, source.as_str(), *op)),
            _ => None,
        })
        .collect();
    let results: Vec<Result<()>> = jobs
        .par_iter()
        .map(|(e, source, op)| {
            let img = GrayImage::load(src_root.join(source))?;
            let (out, _) = apply_augment(&img, &[], op)?;
            if (out.width(), out.height()) != (e.width, e.height) {
                return Err(invalid(format!(
                    "{}: rendered {}x{} but the manifest records {}x{}",
                    e.image,
                    out.width(),
                    out.height(),
                    e.width,
                    e.height
                )));
            }
            let dst: PathBuf = dst_root.join(&e.image);
            if let Some(parent) = dst.parent() {
                std::fs::create_dir_all(parent).map_err(crate::error::io_err(parent))?;
            }
            out.save(dst)
        })
        .collect();
    results.into_iter().collect::<Result<Vec<()>>>().map(|v| v.len())
}

/// Appends externally generated entries. Each must carry synthetic
/// provenance and a path not already in the manifest.
pub fn merge_synthetic(m: &DatasetManifest, synthetic: Vec<ManifestEntry>) -> Result<DatasetManifest> {
    if let Some(e) = synthetic.iter().find(|e| !matches!(e.provenance, Some(Provenance::Synthetic { .. }))) {
        return Err(invalid(format!("{}: merged entries must record synthetic provenance", e.image)));
    }
    let mut entries = m.entries().to_vec();
    entries.extend(synthetic);
    DatasetManifest::with_ratio(entries, m.train_ratio())
}
