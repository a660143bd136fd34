//! Evaluation metrics for generated images and for detections.

pub mod detection;
pub mod fid;
pub mod lpips;
pub mod quality;

pub use detection::{
    average_precision, coco_thresholds, iou, match_detections, mean_ap, parse_iou_spec, pr_at_best_f1, ApMethod, MapReport,
    PrAtBestF1,
};
pub use fid::{fid, read_features_csv, FeatureStats};
pub use lpips::{gradient_pyramid, lpips_form, LpipsLayer};
pub use quality::{psnr, ssim, SsimConfig, SsimWindow};

/// Neumaier-compensated sum, so long reductions do not depend on
/// accumulated rounding.
pub fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
