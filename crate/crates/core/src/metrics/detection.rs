//! Box overlap, greedy prediction-to-ground-truth matching, average
//! precision and the class-averaged summaries built on them.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::defect::{BBox, DefectClass, DetectionRecord};
use crate::error::{invalid, Error, Result};

/// Intersection over union; 0 for disjoint or degenerate boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let ih = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Result of matching one image's predictions of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Prediction indices in descending score order (ties by input order).
    pub order: Vec<usize>,
    /// `tp[k]` is whether prediction `order[k]` matched.
    pub tp: Vec<bool>,
    /// Ground-truth index matched by each prediction, in `order`.
    pub matched_gt: Vec<Option<usize>>,
    pub false_negatives: usize,
}

/// Indices sorted by descending score, ties kept in input order.
pub fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Greedy matching: each prediction, in score order, takes the still
/// unmatched ground truth of highest IoU at or above `thresh` (lowest
/// index on IoU ties).
pub fn match_detections(pred_boxes: &[BBox], scores: &[f64], gts: &[BBox], thresh: f64) -> Result<MatchResult> {
    if pred_boxes.len() != scores.len() {
        return Err(invalid("one score per prediction is required"));
    }
    let order = score_order(scores);
    let mut taken = vec![false; gts.len()];
    let mut matched_gt = Vec::with_capacity(order.len());
    for &p in &order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(&pred_boxes[p], gt);
            if v >= thresh && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
        }
        matched_gt.push(best.map(|(g, _)| g));
    }
    let tp = matched_gt.iter().map(Option::is_some).collect();
    let false_negatives = taken.iter().filter(|t| !**t).count();
    Ok(MatchResult { order, tp, matched_gt, false_negatives })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMethod {
    /// Mean interpolated precision at recall 0, 0.01, ..., 1.
    #[default]
    Interp101,
    /// Exact area under the interpolated curve.
    AllPoint,
}

/// Recall and precision after each prediction in ranked order, plus the
/// non-increasing precision envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
    pub envelope: Vec<f64>,
}

pub fn pr_curve(tp_ranked: &[bool], num_gt: usize) -> PrCurve {
    let mut recall = Vec::with_capacity(tp_ranked.len());
    let mut precision = Vec::with_capacity(tp_ranked.len());
    let mut tp = 0usize;
    for (k, &hit) in tp_ranked.iter().enumerate() {
        tp += hit as usize;
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    let mut envelope = precision.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    PrCurve { recall, precision, envelope }
}

/// Area under the interpolated precision-recall curve for ranked matches.
pub fn average_precision(tp_ranked: &[bool], num_gt: usize, method: ApMethod) -> Result<f64> {
    if num_gt == 0 {
        return Err(invalid("average precision needs at least one ground-truth box"));
    }
    let c = pr_curve(tp_ranked, num_gt);
    Ok(match method {
        ApMethod::Interp101 => {
            let total: f64 = (0..=100)
                .map(|i| {
                    let r = i as f64 / 100.0;
                    let k = c.recall.partition_point(|&v| v < r);
                    c.envelope.get(k).copied().unwrap_or(0.0)
                })
                .sum();
            total / 101.0
        }
        ApMethod::AllPoint => {
            let mut prev = 0.0;
            let mut area = 0.0;
            for (r, p) in c.recall.iter().zip(&c.envelope) {
                area += (r - prev) * p;
                prev = *r;
            }
            area
        }
    })
}

/// `[0.50, 0.55, ..., 0.95]`.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Parses `0.5` or a `start:end` range stepped by 0.05.
pub fn parse_iou_spec(spec: &str) -> Result<Vec<f64>> {
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad IoU threshold {s:?}: {e}")));
    let out = match spec.split_once(':') {
        None => vec![parse(spec)?],
        Some((a, b)) => {
            let (lo, hi) = (parse(a)?, parse(b)?);
            if hi < lo {
                return Err(invalid(format!("IoU range {spec:?} is empty")));
            }
            let (lo_c, hi_c) = ((lo * 100.0).round() as i64, (hi * 100.0).round() as i64);
            (lo_c..=hi_c).step_by(5).map(|c| c as f64 / 100.0).collect()
        }
    };
    if out.iter().any(|t| !(0.0..=1.0).contains(t) || *t == 0.0) {
        return Err(invalid(format!("IoU thresholds must lie in (0, 1], got {spec:?}")));
    }
    Ok(out)
}

/// Predictions of one class ranked across images, with TP flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMatches {
    pub scores: Vec<f64>,
    pub tp: Vec<bool>,
    pub num_gt: usize,
}

/// Matches one class at one threshold image by image, then ranks all of
/// its predictions by score (ties by input position).
pub fn match_class(preds: &[&DetectionRecord], gts: &[&DetectionRecord], thresh: f64) -> Result<ClassMatches> {
    let mut by_image: BTreeMap<&str, (Vec<usize>, Vec<BBox>)> = BTreeMap::new();
    for (i, p) in preds.iter().enumerate() {
        by_image.entry(&p.image_id).or_default().0.push(i);
    }
    for g in gts {
        by_image.entry(&g.image_id).or_default().1.push(g.bbox);
    }
    let mut flags = vec![false; preds.len()];
    for (idx, gt_boxes) in by_image.values() {
        let boxes: Vec<BBox> = idx.iter().map(|&i| preds[i].bbox).collect();
        let scores: Vec<f64> = idx.iter().map(|&i| score_of(preds[i])).collect::<Result<_>>()?;
        let m = match_detections(&boxes, &scores, gt_boxes, thresh)?;
        for (k, &local) in m.order.iter().enumerate() {
            flags[idx[local]] = m.tp[k];
        }
    }
    let all_scores: Vec<f64> = preds.iter().map(|p| score_of(p)).collect::<Result<_>>()?;
    let order = score_order(&all_scores);
    Ok(ClassMatches {
        scores: order.iter().map(|&i| all_scores[i]).collect(),
        tp: order.iter().map(|&i| flags[i]).collect(),
        num_gt: gts.len(),
    })
}

fn score_of(p: &DetectionRecord) -> Result<f64> {
    p.score.ok_or_else(|| invalid(format!("prediction on {} has no score", p.image_id)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class: DefectClass,
    pub num_gt: usize,
    pub ap50: f64,
    /// Mean AP over the requested thresholds.
    pub ap_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub map50: f64,
    pub map5095: f64,
    pub thresholds: Vec<f64>,
    pub per_class: Vec<ClassAp>,
}

/// Per-class AP at 0.5 and averaged over `thresholds`; classes without
/// ground truth are left out of both means.
pub fn mean_ap(
    preds: &[DetectionRecord],
    gts: &[DetectionRecord],
    classes: &[DefectClass],
    thresholds: &[f64],
    method: ApMethod,
) -> Result<MapReport> {
    if gts.is_empty() {
        return Err(invalid("mAP needs at least one ground-truth box"));
    }
    if thresholds.is_empty() {
        return Err(invalid("mAP needs at least one IoU threshold"));
    }
    for r in preds.iter().chain(gts) {
        r.validate()?;
    }
    let per_class: Vec<ClassAp> = classes
        .par_iter()
        .filter_map(|&class| {
            let cg: Vec<&DetectionRecord> = gts.iter().filter(|g| g.class == class).collect();
            if cg.is_empty() {
                return None;
            }
            let cp: Vec<&DetectionRecord> = preds.iter().filter(|p| p.class == class).collect();
            let ap_at = |t: f64| match_class(&cp, &cg, t).and_then(|m| average_precision(&m.tp, m.num_gt, method));
            Some((|| {
                let ap50 = ap_at(0.5)?;
                let aps = thresholds.iter().map(|&t| ap_at(t)).collect::<Result<Vec<_>>>()?;
                Ok(ClassAp { class, num_gt: cg.len(), ap50, ap_range: aps.iter().sum::<f64>() / aps.len() as f64 })
            })())
        })
        .collect::<Result<Vec<_>>>()?;
    if per_class.is_empty() {
        return Err(invalid("no requested class has ground-truth boxes"));
    }
    let n = per_class.len() as f64;
    Ok(MapReport {
        map50: per_class.iter().map(|c| c.ap50).sum::<f64>() / n,
        map5095: per_class.iter().map(|c| c.ap_range).sum::<f64>() / n,
        thresholds: thresholds.to_vec(),
        per_class,
    })
}

/// Pooled precision and recall at the score threshold that maximizes F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrAtBestF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub score_threshold: f64,
}

/// Matches every class at `thresh`, pools the ranked predictions and picks
/// the cut-off with the highest F1. Only cut-offs between distinct scores
/// are considered; with no predictions every value is 0.
pub fn pr_at_best_f1(preds: &[DetectionRecord], gts: &[DetectionRecord], thresh: f64) -> Result<PrAtBestF1> {
    if gts.is_empty() {
        return Err(invalid("precision and recall need ground truth"));
    }
    let mut pooled: Vec<(f64, bool)> = Vec::with_capacity(preds.len());
    for class in DefectClass::ALL {
        let cp: Vec<&DetectionRecord> = preds.iter().filter(|p| p.class == class).collect();
        let cg: Vec<&DetectionRecord> = gts.iter().filter(|g| g.class == class).collect();
        let m = match_class(&cp, &cg, thresh)?;
        pooled.extend(m.scores.into_iter().zip(m.tp));
    }
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total = gts.len() as f64;
    let mut best = PrAtBestF1 { precision: 0.0, recall: 0.0, f1: 0.0, score_threshold: 1.0 };
    let mut tp = 0usize;
    for (k, &(score, hit)) in pooled.iter().enumerate() {
        tp += hit as usize;
        let boundary = pooled.get(k + 1).is_none_or(|next| next.0 < score);
        if !boundary {
            continue;
        }
        let (p, r) = (tp as f64 / (k + 1) as f64, tp as f64 / total);
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        if f1 > best.f1 {
            best = PrAtBestF1 { precision: p, recall: r, f1, score_threshold: score };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tolerance::AP_DISCRETIZATION;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h)
    }

    #[test]
    fn iou_examples() {
        let a = b(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(5.0, 5.0, 1.0, 1.0)), 0.0);
        assert!((iou(&a, &b(1.0, 0.0, 2.0, 2.0)) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&a, &b(2.0, 0.0, 2.0, 2.0)), 0.0);
    }

    #[test]
    fn matching_examples() {
        let g = [b(0.0, 0.0, 4.0, 4.0)];
        let m = match_detections(&[g[0]], &[0.9], &g, 0.5).unwrap();
        assert_eq!((m.tp.clone(), m.false_negatives), (vec![true], 0));
        let preds = [b(0.0, 0.0, 4.0, 4.0), b(0.0, 0.0, 4.0, 3.5)];
        let m = match_detections(&preds, &[0.4, 0.8], &g, 0.5).unwrap();
        assert_eq!(m.order, vec![1, 0]);
        assert_eq!(m.tp, vec![true, false]);
    }

    /// Brute force: among all injective partial assignments, the unique
    /// one where every prediction (in rank order) holds the best still
    /// available ground truth, or nothing when none clears the threshold.
    fn brute_force(preds: &[BBox], scores: &[f64], gts: &[BBox], t: f64) -> Vec<Option<usize>> {
        let order = score_order(scores);
        let n = preds.len();
        let choices = gts.len() + 1;
        let mut found = Vec::new();
        for code in 0..choices.pow(n as u32) {
            let assign: Vec<Option<usize>> =
                (0..n).map(|k| (code / choices.pow(k as u32)) % choices).map(|c| (c < gts.len()).then_some(c)).collect();
            let mut used = vec![false; gts.len()];
            let mut valid = true;
            for (k, &p) in order.iter().enumerate() {
                let available: Vec<usize> = (0..gts.len()).filter(|&g| !used[g]).collect();
                let best = available
                    .iter()
                    .filter(|&&g| iou(&preds[p], &gts[g]) >= t)
                    .fold(None::<usize>, |acc, &g| match acc {
                        Some(a) if iou(&preds[p], &gts[a]) >= iou(&preds[p], &gts[g]) => Some(a),
                        _ => Some(g),
                    });
                if assign[k] != best {
                    valid = false;
                    break;
                }
                if let Some(g) = best {
                    used[g] = true;
                }
            }
            if valid {
                found.push(assign);
            }
        }
        assert_eq!(found.len(), 1);
        found.pop().unwrap()
    }

    #[test]
    fn greedy_matches_brute_force() {
        use crate::init::seeded_rng;
        use rand::Rng;
        for seed in 0..30 {
            let mut rng = seeded_rng(seed);
            let mut rb = || b(rng.random_range(0.0..6.0), rng.random_range(0.0..6.0), rng.random_range(1.0..5.0), rng.random_range(1.0..5.0));
            let gts: Vec<BBox> = (0..3).map(|_| rb()).collect();
            let preds: Vec<BBox> = (0..5).map(|_| rb()).collect();
            let mut rng = seeded_rng(seed + 1000);
            let scores: Vec<f64> = (0..5).map(|_| (rng.random_range(0..4) as f64) / 4.0).collect();
            let m = match_detections(&preds, &scores, &gts, 0.3).unwrap();
            assert_eq!(m.matched_gt, brute_force(&preds, &scores, &gts, 0.3), "seed {seed}");
        }
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[true], 1, ApMethod::Interp101).unwrap(), 1.0);
        assert_eq!(average_precision(&[false, false], 1, ApMethod::Interp101).unwrap(), 0.0);
        assert_eq!(average_precision(&[], 2, ApMethod::AllPoint).unwrap(), 0.0);
        let tp = [true, false, true];
        let exact = average_precision(&tp, 2, ApMethod::AllPoint).unwrap();
        assert!((exact - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        let interp = average_precision(&tp, 2, ApMethod::Interp101).unwrap();
        assert!((interp - exact).abs() <= AP_DISCRETIZATION);
        assert!(average_precision(&tp, 0, ApMethod::Interp101).is_err());
    }

    #[test]
    fn iou_spec_parsing() {
        assert_eq!(parse_iou_spec("0.5:0.95").unwrap(), coco_thresholds());
        assert_eq!(parse_iou_spec("0.75").unwrap(), vec![0.75]);
        assert!(parse_iou_spec("0.9:0.5").is_err());
        assert!(parse_iou_spec("abc").is_err());
    }

    fn rec(img: &str, class: DefectClass, bbox: BBox, score: Option<f64>) -> DetectionRecord {
        DetectionRecord { image_id: img.into(), class, bbox, score }
    }

    #[test]
    fn perfect_and_empty_detectors() {
        let gts = vec![
            rec("a", DefectClass::Short, b(0.0, 0.0, 5.0, 5.0), None),
            rec("a", DefectClass::Open, b(10.0, 10.0, 4.0, 4.0), None),
            rec("b", DefectClass::Short, b(3.0, 3.0, 5.0, 5.0), None),
        ];
        let preds: Vec<_> = gts.iter().map(|g| DetectionRecord { score: Some(1.0), ..g.clone() }).collect();
        let r = mean_ap(&preds, &gts, &DefectClass::ALL, &coco_thresholds(), ApMethod::Interp101).unwrap();
        assert_eq!((r.map50, r.map5095), (1.0, 1.0));
        assert_eq!(r.per_class.len(), 2);
        let r = mean_ap(&[], &gts, &DefectClass::ALL, &coco_thresholds(), ApMethod::Interp101).unwrap();
        assert_eq!((r.map50, r.map5095), (0.0, 0.0));
        assert!(mean_ap(&preds, &[], &DefectClass::ALL, &[0.5], ApMethod::Interp101).is_err());
        let pr = pr_at_best_f1(&preds, &gts, 0.5).unwrap();
        assert_eq!((pr.precision, pr.recall, pr.f1), (1.0, 1.0, 1.0));
    }
}
