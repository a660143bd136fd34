//! Pixel-level similarity: PSNR and windowed SSIM.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::metrics::stable_sum;
use crate::tensor::Tensor;

/// `10 log10(max^2 / MSE)` over all elements; identical inputs give
/// `f64::INFINITY`.
pub fn psnr(x: &Tensor, y: &Tensor, max_val: f64) -> Result<f64> {
    x.expect_same_shape(y)?;
    if !(max_val > 0.0) {
        return Err(invalid(format!("PSNR peak value must be positive, got {max_val}")));
    }
    let mse = stable_sum(x.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b))) / x.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_val * max_val / mse).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SsimWindow {
    /// Equal weights over a `size x size` window.
    Uniform,
    /// Normalized Gaussian weights centred in the window.
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub c1: f64,
    pub c2: f64,
    pub window_size: usize,
    pub window: SsimWindow,
    /// Treat the whole image as one uniform window.
    pub global: bool,
    pub max_val: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self::for_range(255.0)
    }
}

impl SsimConfig {
    /// `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2`, uniform 8x8 window.
    pub fn for_range(max_val: f64) -> Self {
        Self {
            c1: (0.01 * max_val).powi(2),
            c2: (0.03 * max_val).powi(2),
            window_size: 8,
            window: SsimWindow::Uniform,
            global: false,
            max_val,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(invalid("SSIM constants must be positive"));
        }
        if self.window_size == 0 {
            return Err(invalid("SSIM window must be at least 1 pixel"));
        }
        if let SsimWindow::Gaussian { sigma } = self.window {
            if !(sigma > 0.0) {
                return Err(invalid("SSIM Gaussian sigma must be positive"));
            }
        }
        Ok(())
    }

    fn weights(&self, size: usize) -> Vec<f64> {
        match self.window {
            SsimWindow::Uniform => vec![1.0 / (size * size) as f64; size * size],
            SsimWindow::Gaussian { sigma } => {
                let centre = (size as f64 - 1.0) / 2.0;
                let raw: Vec<f64> = (0..size * size)
                    .map(|i| {
                        let (dy, dx) = ((i / size) as f64 - centre, (i % size) as f64 - centre);
                        (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp()
                    })
                    .collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / total).collect()
            }
        }
    }
}

/// SSIM of one window given weights and the two pixel sets.
fn window_ssim(xs: &[f64], ys: &[f64], w: &[f64], c1: f64, c2: f64) -> f64 {
    let mx: f64 = xs.iter().zip(w).map(|(v, k)| v * k).sum();
    let my: f64 = ys.iter().zip(w).map(|(v, k)| v * k).sum();
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for ((a, b), k) in xs.iter().zip(ys).zip(w) {
        let (da, db) = (a - mx, b - my);
        vx += k * da * da;
        vy += k * db * db;
        cxy += k * da * db;
    }
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Mean SSIM over every stride-1 window of every `(N, C)` plane.
pub fn ssim(x: &Tensor, y: &Tensor, cfg: &SsimConfig) -> Result<f64> {
    cfg.validate()?;
    x.expect_same_shape(y)?;
    let (n, c, h, w) = x.dims4()?;
    if cfg.global {
        return ssim_global(x, y, cfg);
    }
    let size = cfg.window_size;
    if h < size || w < size {
        return Err(invalid(format!("{h}x{w} image is smaller than the {size}x{size} SSIM window")));
    }
    let weights = cfg.weights(size);
    let mut scores = Vec::with_capacity(n * c * (h - size + 1) * (w - size + 1));
    let mut xs = vec![0.0; size * size];
    let mut ys = vec![0.0; size * size];
    for b in 0..n {
        for ch in 0..c {
            let (px, py) = (x.plane(b, ch), y.plane(b, ch));
            for oy in 0..=h - size {
                for ox in 0..=w - size {
                    for dy in 0..size {
                        let row = (oy + dy) * w + ox;
                        xs[dy * size..][..size].copy_from_slice(&px[row..row + size]);
                        ys[dy * size..][..size].copy_from_slice(&py[row..row + size]);
                    }
                    scores.push(window_ssim(&xs, &ys, &weights, cfg.c1, cfg.c2));
                }
            }
        }
    }
    Ok(stable_sum(scores.iter().copied()) / scores.len() as f64)
}

/// One uniform window covering each whole plane.
fn ssim_global(x: &Tensor, y: &Tensor, cfg: &SsimConfig) -> Result<f64> {
    let (n, c, h, w) = x.dims4()?;
    let weights = vec![1.0 / (h * w) as f64; h * w];
    let scores: Vec<f64> = (0..n)
        .flat_map(|b| (0..c).map(move |ch| (b, ch)))
        .map(|(b, ch)| window_ssim(x.plane(b, ch), y.plane(b, ch), &weights, cfg.c1, cfg.c2))
        .collect();
    Ok(stable_sum(scores.iter().copied()) / scores.len() as f64)
}
