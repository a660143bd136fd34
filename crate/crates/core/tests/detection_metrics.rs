//! Detection metrics against the naive oracle and under random inputs.

use std::path::PathBuf;

use pcbdefect::defect::{read_jsonl, BBox, DefectClass, DetectionRecord};
use pcbdefect::metrics::{average_precision, coco_thresholds, match_detections, mean_ap, ApMethod};
use pcbdefect::reference::{naive_class_ap, naive_map};
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn toy() -> (Vec<DetectionRecord>, Vec<DetectionRecord>) {
    (read_jsonl(fixture("toy_pred.jsonl")).unwrap(), read_jsonl(fixture("toy_gt.jsonl")).unwrap())
}

#[test]
fn toy_all_point_equals_oracle() {
    let (p, g) = toy();
    let r = mean_ap(&p, &g, &DefectClass::ALL, &coco_thresholds(), ApMethod::AllPoint).unwrap();
    assert!((r.map5095 - naive_map(&p, &g, &coco_thresholds())).abs() < 1e-12);
    assert!((r.map50 - naive_map(&p, &g, &[0.5])).abs() < 1e-12);
    for c in &r.per_class {
        assert!((c.ap50 - naive_class_ap(&p, &g, c.class, 0.5).unwrap()).abs() < 1e-12, "{:?}", c.class);
    }
}

#[test]
fn toy_interp101_within_discretization_bound() {
    let (p, g) = toy();
    let r = mean_ap(&p, &g, &DefectClass::ALL, &coco_thresholds(), ApMethod::Interp101).unwrap();
    assert!((r.map5095 - naive_map(&p, &g, &coco_thresholds())).abs() < 0.01);
    assert!((r.map50 - naive_map(&p, &g, &[0.5])).abs() < 0.01);
    assert_eq!(r.per_class.len(), 6);
}

fn records() -> impl Strategy<Value = (Vec<DetectionRecord>, Vec<DetectionRecord>)> {
    let rec = (0usize..3, 0usize..3, 0.0f64..40.0, 0.0f64..40.0, 2.0f64..20.0, 2.0f64..20.0);
    let gts = proptest::collection::vec(rec.clone(), 1..10);
    let preds = proptest::collection::vec((rec, 0.01f64..1.0), 0..14);
    (gts, preds).prop_map(|(gts, preds)| {
        let mk = |(img, cls, x, y, w, h): (usize, usize, f64, f64, f64, f64), score| DetectionRecord {
            image_id: format!("i{img}"),
            class: DefectClass::from_index(cls).unwrap(),
            bbox: BBox::new(x, y, w, h),
            score,
        };
        let g = gts.into_iter().map(|r| mk(r, None)).collect();
        let p = preds.into_iter().map(|(r, s)| mk(r, Some(s))).collect();
        (p, g)
    })
}

proptest! {
    #[test]
    fn ap_ignores_monotone_score_transforms((preds, gts) in records(), power in 0.2f64..5.0) {
        let squashed: Vec<DetectionRecord> =
            preds.iter().cloned().map(|mut r| { r.score = r.score.map(|s| s.powf(power)); r }).collect();
        for method in [ApMethod::Interp101, ApMethod::AllPoint] {
            let a = mean_ap(&preds, &gts, &DefectClass::ALL, &coco_thresholds(), method).unwrap();
            let b = mean_ap(&squashed, &gts, &DefectClass::ALL, &coco_thresholds(), method).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn map50_dominates_map5095((preds, gts) in records()) {
        let r = mean_ap(&preds, &gts, &DefectClass::ALL, &coco_thresholds(), ApMethod::Interp101).unwrap();
        prop_assert!(r.map50 >= r.map5095 - 1e-12);
        prop_assert!((0.0..=1.0).contains(&r.map50) && (0.0..=1.0).contains(&r.map5095));
    }

    #[test]
    fn all_point_matches_oracle_on_random_sets((preds, gts) in records()) {
        let r = mean_ap(&preds, &gts, &DefectClass::ALL, &[0.5, 0.75], ApMethod::AllPoint).unwrap();
        prop_assert!((r.map5095 - naive_map(&preds, &gts, &[0.5, 0.75])).abs() < 1e-12);
    }

    #[test]
    fn interp101_tracks_all_point(tp in proptest::collection::vec(any::<bool>(), 0..40), extra_gt in 0usize..5) {
        let num_gt = tp.iter().filter(|&&t| t).count() + extra_gt;
        prop_assume!(num_gt > 0);
        let a = average_precision(&tp, num_gt, ApMethod::Interp101).unwrap();
        let b = average_precision(&tp, num_gt, ApMethod::AllPoint).unwrap();
        prop_assert!((a - b).abs() <= 0.01 + 1e-12, "{a} vs {b}");
    }

    #[test]
    fn each_ground_truth_matched_at_most_once(
        boxes in proptest::collection::vec((0.0f64..20.0, 0.0f64..20.0, 1.0f64..10.0, 1.0f64..10.0), 0..12),
        gts in proptest::collection::vec((0.0f64..20.0, 0.0f64..20.0, 1.0f64..10.0, 1.0f64..10.0), 0..8),
    ) {
        let p: Vec<BBox> = boxes.iter().map(|&(x, y, w, h)| BBox::new(x, y, w, h)).collect();
        let g: Vec<BBox> = gts.iter().map(|&(x, y, w, h)| BBox::new(x, y, w, h)).collect();
        let scores: Vec<f64> = (0..p.len()).map(|i| 1.0 - i as f64 / 100.0).collect();
        let m = match_detections(&p, &scores, &g, 0.3).unwrap();
        let mut used: Vec<usize> = m.matched_gt.iter().flatten().copied().collect();
        let hits = used.len();
        used.sort_unstable();
        used.dedup();
        prop_assert_eq!(used.len(), hits);
        prop_assert_eq!(m.false_negatives, g.len() - hits);
    }
}
