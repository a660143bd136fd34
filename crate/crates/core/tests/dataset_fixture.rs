//! The checked-in 20-image toy manifest: counts, persistence, Extend I and
//! augmentation laws.

use std::path::PathBuf;

use pcbdefect::dataset::{
    apply_augment, build_extend1, dataset_stats, render_entries, AugmentOp, ClassTargets, DatasetManifest, Provenance,
};
use pcbdefect::defect::{BBox, DefectClass, DefectInstance};
use pcbdefect::image::GrayImage;
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn toy() -> DatasetManifest {
    DatasetManifest::read(fixture("toy_manifest.jsonl")).unwrap()
}

#[test]
fn toy_counts_match_hand_tally() {
    let tally: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fixture("toy_manifest_tally.json")).unwrap()).unwrap();
    assert_eq!(serde_json::to_value(dataset_stats(&toy())).unwrap(), tally);
}

#[test]
fn toy_round_trips_through_disk() {
    let m = toy();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    m.write(&path).unwrap();
    assert_eq!(DatasetManifest::read(&path).unwrap(), m);
}

#[test]
fn toy_split_is_eight_to_two() {
    assert!(toy().split_ratio_ok());
}

#[test]
fn five_more_shorts() {
    let m = toy();
    let before = dataset_stats(&m);
    let mut targets = before.images.clone();
    *targets.get_mut(&DefectClass::Short).unwrap() += 5;
    let out = build_extend1(&m, &targets, 11).unwrap();
    assert_eq!(&out.entries()[..m.len()], m.entries());
    let new = &out.entries()[m.len()..];
    assert_eq!(new.len(), 5);
    for e in new {
        assert!(e.has_class(DefectClass::Short));
        e.validate().unwrap();
        let Some(Provenance::Augmented { source, .. }) = &e.provenance else { panic!("missing provenance") };
        assert!(m.entries().iter().any(|s| &s.image == source && s.has_class(DefectClass::Short)));
    }
    assert_eq!(dataset_stats(&out).image_count(DefectClass::Short), before.image_count(DefectClass::Short) + 5);
}

#[test]
fn extend1_is_byte_reproducible() {
    let m = toy();
    let targets: ClassTargets = DefectClass::ALL.iter().map(|&c| (c, 8)).collect();
    let a = build_extend1(&m, &targets, 2024).unwrap().to_jsonl().unwrap();
    let b = build_extend1(&m, &targets, 2024).unwrap().to_jsonl().unwrap();
    assert_eq!(a, b);
    let c = build_extend1(&m, &targets, 2025).unwrap().to_jsonl().unwrap();
    assert_ne!(a, c);
}

#[test]
fn rendered_images_match_recorded_ops() {
    let m = toy();
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    std::fs::create_dir_all(src.join("images")).unwrap();
    for (i, e) in m.entries().iter().enumerate() {
        GrayImage::from_fn(e.width, e.height, |x, y| ((x * 3 + y * 5 + i) % 256) as u8).save(src.join(&e.image)).unwrap();
    }
    let targets: ClassTargets = [(DefectClass::SpuriousCopper, 6)].into_iter().collect();
    let out = build_extend1(&m, &targets, 5).unwrap();
    let dst = dir.path().join("dst");
    assert_eq!(render_entries(&out, &src, &dst).unwrap(), out.len() - m.len());
    for e in &out.entries()[m.len()..] {
        let Some(Provenance::Augmented { source, op }) = &e.provenance else { unreachable!() };
        let (expect, _) = apply_augment(&GrayImage::load(src.join(source)).unwrap(), &[], op).unwrap();
        assert_eq!(GrayImage::load(dst.join(&e.image)).unwrap(), expect);
    }
}

fn geometric_op() -> impl Strategy<Value = AugmentOp> {
    prop_oneof![Just(AugmentOp::Hflip), Just(AugmentOp::Vflip), (1u8..=3).prop_map(|k| AugmentOp::Rotate90 { k })]
}

fn sized_box() -> impl Strategy<Value = (usize, usize, BBox)> {
    (2usize..20, 2usize..20).prop_flat_map(|(w, h)| {
        (0..w, 0..h).prop_flat_map(move |(x, y)| {
            (1..=w - x, 1..=h - y).prop_map(move |(bw, bh)| (w, h, BBox::new(x as f64, y as f64, bw as f64, bh as f64)))
        })
    })
}

fn inverse(op: AugmentOp) -> AugmentOp {
    match op {
        AugmentOp::Rotate90 { k } => AugmentOp::Rotate90 { k: 4 - k },
        other => other,
    }
}

proptest! {
    #[test]
    fn geometric_ops_stay_in_bounds_and_invert((w, h, b) in sized_box(), op in geometric_op()) {
        let img = GrayImage::from_fn(w, h, |x, y| (x * 17 + y * 31) as u8);
        let inst = [DefectInstance::new(DefectClass::Open, b)];
        let (out, moved) = apply_augment(&img, &inst, &op).unwrap();
        prop_assert_eq!((out.width(), out.height()), op.output_size(w, h));
        prop_assert!(moved[0].bbox.within(out.width() as f64, out.height() as f64));
        prop_assert_eq!(moved[0].bbox.area(), b.area());
        let (back, restored) = apply_augment(&out, &moved, &inverse(op)).unwrap();
        prop_assert_eq!(back, img);
        prop_assert_eq!(restored[0].bbox, b);
    }

    #[test]
    fn extend1_meets_every_target(extra in proptest::collection::vec(0usize..4, 6), seed in any::<u64>()) {
        let m = toy();
        let before = dataset_stats(&m);
        let targets: ClassTargets = DefectClass::ALL.iter().zip(&extra).map(|(&c, &e)| (c, before.image_count(c) + e)).collect();
        let out = build_extend1(&m, &targets, seed).unwrap();
        let after = dataset_stats(&out);
        for (c, t) in &targets {
            prop_assert!(after.image_count(*c) >= *t);
        }
        prop_assert!(out.len() - m.len() <= extra.iter().sum::<usize>());
        prop_assert_eq!(&out.entries()[..m.len()], m.entries());
    }
}
