//! Slow, loop-per-definition reference implementations. They share no
//! code with the fast kernels and serve as oracles for tests and for the
//! block invariant sweep.

use crate::defect::{BBox, DefectClass, DetectionRecord};
use crate::ops::ConvParams;
use crate::tensor::Tensor;

/// Independent quadruple loop straight from the definition.
pub fn naive_conv(x: &Tensor, p: &ConvParams) -> Tensor {
    let (n, c, h, w) = x.dims4().unwrap();
    let (kh, kw) = p.kernel();
    let oc_n = p.out_channels();
    let icg_n = c / p.groups;
    let ocg_n = oc_n / p.groups;
    let oh = (h + 2 * p.padding - kh) / p.stride + 1;
    let ow = (w + 2 * p.padding - kw) / p.stride + 1;
    let mut out = Tensor::zeros(&[n, oc_n, oh, ow]);
    for b in 0..n {
        for oc in 0..oc_n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = p.bias.as_ref().map_or(0.0, |v| v[oc]);
                    for icg in 0..icg_n {
                        let ic = (oc / ocg_n) * icg_n + icg;
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * p.stride + ky) as i64 - p.padding as i64;
                                let ix = (ox * p.stride + kx) as i64 - p.padding as i64;
                                if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                    continue;
                                }
                                s += p.weight.at4(oc, icg, ky, kx) * x.at4(b, ic, iy as usize, ix as usize);
                            }
                        }
                    }
                    let idx = ((b * oc_n + oc) * oh + oy) * ow + ox;
                    out.data_mut()[idx] = s;
                }
            }
        }
    }
    out
}


/// Space-to-depth straight from the index formula.
pub fn naive_space_to_depth(x: &Tensor, b: usize) -> Tensor {
    let (n, c, h, w) = x.dims4().unwrap();
    let (oh, ow) = (h / b, w / b);
    let oc = c * b * b;
    let mut out = Tensor::zeros(&[n, oc, oh, ow]);
    for s in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let (dy, dx) = (y % b, xx % b);
                    let o = (dy * b + dx) * c + ch;
                    out.data_mut()[((s * oc + o) * oh + y / b) * ow + xx / b] = x.at4(s, ch, y, xx);
                }
            }
        }
    }
    out
}

/// Shifts channel group `g` by `offsets[g] = (dy, dx)`:
/// `out[y][x] = in[y - dy][x - dx]`, zero where the source falls outside.
pub fn naive_shift(x: &Tensor, offsets: &[(isize, isize)]) -> Tensor {
    let (n, c, h, w) = x.dims4().unwrap();
    let per = c / offsets.len();
    let mut out = Tensor::zeros(x.shape());
    for b in 0..n {
        for ch in 0..c {
            let (dy, dx) = offsets[ch / per];
            for y in 0..h as isize {
                for xx in 0..w as isize {
                    let (sy, sx) = (y - dy, xx - dx);
                    if sy >= 0 && sx >= 0 && sy < h as isize && sx < w as isize {
                        let v = x.at4(b, ch, sy as usize, sx as usize);
                        out.data_mut()[((b * c + ch) * h + y as usize) * w + xx as usize] = v;
                    }
                }
            }
        }
    }
    out
}

/// Multi-head attention over spatial tokens of already projected maps.
/// Head `h` uses channels `[h * d, (h + 1) * d)` of `q` and `k` and the
/// matching slice of `v`; logits are multiplied by `scales[h]`.
pub fn naive_attention(q: &Tensor, k: &Tensor, v: &Tensor, scales: &[f64]) -> Tensor {
    let (n, qc, h, w) = q.dims4().unwrap();
    let vc = v.shape()[1];
    let heads = scales.len();
    let (dq, dv) = (qc / heads, vc / heads);
    let tokens = h * w;
    let mut out = Tensor::zeros(&[n, vc, h, w]);
    for b in 0..n {
        for hd in 0..heads {
            for i in 0..tokens {
                let logits: Vec<f64> = (0..tokens)
                    .map(|j| {
                        let dot: f64 = (0..dq)
                            .map(|d| q.at4(b, hd * dq + d, i / w, i % w) * k.at4(b, hd * dq + d, j / w, j % w))
                            .sum();
                        dot * scales[hd]
                    })
                    .collect();
                let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
                let total: f64 = exps.iter().sum();
                for d in 0..dv {
                    let ch = hd * dv + d;
                    let val: f64 = (0..tokens).map(|j| exps[j] / total * v.at4(b, ch, j / w, j % w)).sum();
                    out.data_mut()[((b * vc + ch) * h + i / w) * w + i % w] = val;
                }
            }
        }
    }
    out
}

/// Channel shuffle from the reshape-transpose definition.
pub fn naive_channel_shuffle(x: &Tensor, groups: usize) -> Tensor {
    let (n, c, h, w) = x.dims4().unwrap();
    let per = c / groups;
    let mut out = Tensor::zeros(x.shape());
    for b in 0..n {
        for g in 0..groups {
            for i in 0..per {
                let (src, dst) = (g * per + i, i * groups + g);
                for y in 0..h {
                    for xx in 0..w {
                        out.data_mut()[((b * c + dst) * h + y) * w + xx] = x.at4(b, src, y, xx);
                    }
                }
            }
        }
    }
    out
}

/// Bilinear resize with half-pixel centers, computed per output pixel.
pub fn naive_resize(x: &Tensor, oh: usize, ow: usize) -> Tensor {
    let (n, c, h, w) = x.dims4().unwrap();
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let src = |o: usize, insz: usize, outsz: usize| {
        let s = ((o as f64 + 0.5) * insz as f64 / outsz as f64 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(insz - 1);
        let i1 = (i0 + 1).min(insz - 1);
        (i0, i1, s - i0 as f64)
    };
    for b in 0..n {
        for ch in 0..c {
            for y in 0..oh {
                let (y0, y1, fy) = src(y, h, oh);
                for xx in 0..ow {
                    let (x0, x1, fx) = src(xx, w, ow);
                    let top = x.at4(b, ch, y0, x0) * (1.0 - fx) + x.at4(b, ch, y0, x1) * fx;
                    let bot = x.at4(b, ch, y1, x0) * (1.0 - fx) + x.at4(b, ch, y1, x1) * fx;
                    out.data_mut()[((b * c + ch) * oh + y) * ow + xx] = top * (1.0 - fy) + bot * fy;
                }
            }
        }
    }
    out
}

fn naive_iou(a: &BBox, b: &BBox) -> f64 {
    let ix = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let iy = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = ix * iy;
    let union = a.w * a.h + b.w * b.h - inter;
    if union > 0.0 { inter / union } else { 0.0 }
}

/// Exact area under the precision envelope for one class at one IoU
/// threshold. Predictions are taken in score order (ties by input order);
/// each claims the unclaimed same-image ground truth with the highest IoU.
/// Then, for every prefix of the ranking, recall and precision are
/// recounted from scratch and the area is summed over recall increments
/// using the best precision at any equal or higher recall.
pub fn naive_class_ap(preds: &[DetectionRecord], gts: &[DetectionRecord], class: DefectClass, thresh: f64) -> Option<f64> {
    let gts: Vec<&DetectionRecord> = gts.iter().filter(|g| g.class == class).collect();
    if gts.is_empty() {
        return None;
    }
    let mut ranked: Vec<&DetectionRecord> = preds.iter().filter(|p| p.class == class).collect();
    ranked.sort_by(|a, b| b.score.unwrap().total_cmp(&a.score.unwrap()));
    let mut claimed = vec![false; gts.len()];
    let mut hit = Vec::with_capacity(ranked.len());
    for p in &ranked {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if claimed[g] || gt.image_id != p.image_id {
                continue;
            }
            let v = naive_iou(&p.bbox, &gt.bbox);
            if v >= thresh && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            claimed[g] = true;
        }
        hit.push(best.is_some());
    }
    let points: Vec<(f64, f64)> = (1..=hit.len())
        .map(|k| {
            let tp = hit[..k].iter().filter(|&&h| h).count() as f64;
            (tp / gts.len() as f64, tp / k as f64)
        })
        .collect();
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for &(r, _) in &points {
        let best_p = points.iter().filter(|(rr, _)| *rr >= r).map(|(_, p)| *p).fold(0.0, f64::max);
        area += (r - prev_recall) * best_p;
        prev_recall = r;
    }
    Some(area)
}

/// Mean over classes with ground truth of [`naive_class_ap`], averaged
/// over `thresholds`.
pub fn naive_map(preds: &[DetectionRecord], gts: &[DetectionRecord], thresholds: &[f64]) -> f64 {
    let per_class: Vec<f64> = DefectClass::ALL
        .iter()
        .filter_map(|&c| {
            let aps: Option<Vec<f64>> = thresholds.iter().map(|&t| naive_class_ap(preds, gts, c, t)).collect();
            aps.map(|v| v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    per_class.iter().sum::<f64>() / per_class.len() as f64
}

/// Otsu by exhaustive search straight over the pixels: for every `t` that
/// leaves both classes non-empty, the between-class score
/// `(n1 s0 - n0 s1)^2 / (n0 n1)` is compared as an exact fraction and the
/// first maximum wins. A constant image returns its value.
pub fn naive_otsu(img: &crate::image::GrayImage) -> u8 {
    let px = img.data();
    let mut best: Option<(u8, u128, u128)> = None;
    for t in 0..=255u8 {
        let (mut n0, mut s0, mut n1, mut s1) = (0u128, 0u128, 0u128, 0u128);
        for &v in px {
            if v <= t {
                n0 += 1;
                s0 += v as u128;
            } else {
                n1 += 1;
                s1 += v as u128;
            }
        }
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let d = (n1 * s0).abs_diff(n0 * s1);
        let (num, den) = (d * d, n0 * n1);
        if best.is_none_or(|(_, bn, bd)| num * bd > bn * den) {
            best = Some((t, num, den));
        }
    }
    best.map_or(px[0], |(t, _, _)| t)
}
