//! Depth branch. Real monocular depth estimation plugs in through
//! [`DepthProvider`]; [`BlurDepth`] is the deterministic stand-in.

use crate::error::{dim_err, Result};
use crate::image::{gaussian_blur_f64, GrayImage};
use crate::tensor::Tensor;

pub trait DepthProvider: Send + Sync {
    /// Returns a `(1, 1, H, W)` map with values in `[0, 1]`.
    fn estimate(&self, img: &GrayImage) -> Result<Tensor>;
}

/// Inverted, min-max normalized Gaussian blur of the intensity: bright
/// copper reads as near (0), dark substrate as far (1). A flat image maps
/// to all zeros.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurDepth {
    pub sigma: f64,
    pub radius: usize,
}

impl Default for BlurDepth {
    fn default() -> Self {
        Self { sigma: 2.0, radius: 4 }
    }
}

impl DepthProvider for BlurDepth {
    fn estimate(&self, img: &GrayImage) -> Result<Tensor> {
        let (w, h) = (img.width(), img.height());
        let blurred = gaussian_blur_f64(&img.to_f64(), w, h, self.sigma, self.radius);
        let lo = blurred.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = blurred.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let depth = blurred
            .iter()
            .map(|&v| if span > 0.0 { (1.0 - (v - lo) / span).clamp(0.0, 1.0) } else { 0.0 })
            .collect();
        Tensor::new(vec![1, 1, h, w], depth)
    }
}

/// Checks the provider contract on one output.
pub fn check_depth(img: &GrayImage, depth: &Tensor) -> Result<()> {
    if depth.shape() != [1, 1, img.height(), img.width()] {
        return Err(dim_err(format!(
            "depth map {:?} does not match {}x{} image",
            depth.shape(),
            img.width(),
            img.height()
        )));
    }
    if depth.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(crate::error::invalid("depth values must lie in [0, 1]"));
    }
    Ok(())
}
