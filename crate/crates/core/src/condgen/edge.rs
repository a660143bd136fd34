//! Edge branch: Otsu threshold and Canny detection with thresholds derived
//! from it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::image::{gaussian_blur_f64, GrayImage};
use crate::tolerance::EDGE_MAGNITUDE_FLOOR;

/// Canny parameters. Hysteresis thresholds are `low_factor * t_otsu` and
/// `high_factor * t_otsu`, both clamped to `[0, 255]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeConfig {
    pub low_factor: f64,
    pub high_factor: f64,
    pub gaussian_sigma: f64,
    pub gaussian_radius: usize,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self { low_factor: 0.5, high_factor: 1.5, gaussian_sigma: 1.0, gaussian_radius: 2 }
    }
}

impl EdgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.low_factor && self.low_factor < self.high_factor) {
            return Err(invalid(format!(
                "edge factors must satisfy 0 < low < high, got {} and {}",
                self.low_factor, self.high_factor
            )));
        }
        if !(self.gaussian_sigma > 0.0) {
            return Err(invalid("gaussian sigma must be positive"));
        }
        Ok(())
    }

    pub fn hysteresis_thresholds(&self, otsu: u8) -> (f64, f64) {
        let t = otsu as f64;
        ((self.low_factor * t).clamp(0.0, 255.0), (self.high_factor * t).clamp(0.0, 255.0))
    }
}

pub fn histogram(img: &GrayImage) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    hist
}

/// Threshold `t` maximizing the between-class variance of the split
/// `{v <= t} | {v > t}`.
///
/// Candidates are restricted to the histogram support `[min, max]`; ties go
/// to the smallest `t`. A constant image therefore returns its value.
pub fn otsu_threshold(img: &GrayImage) -> u8 {
    let hist = histogram(img);
    let lo = hist.iter().position(|&c| c > 0).expect("image is non-empty");
    let hi = hist.iter().rposition(|&c| c > 0).expect("image is non-empty");
    let total = img.data().len() as i128;
    let sum_all: i128 = hist.iter().enumerate().map(|(v, &c)| v as i128 * c as i128).sum();

    // Between-class variance is proportional to (N*S0 - n0*S)^2 / (n0*n1);
    // compare candidates as exact fractions so ties are genuine ties.
    let mut best_t = lo;
    let mut best: Option<(i128, i128)> = None;
    let (mut n0, mut s0) = (0i128, 0i128);
    for t in lo..=hi {
        n0 += hist[t] as i128;
        s0 += t as i128 * hist[t] as i128;
        let n1 = total - n0;
        let (num, den) = if n1 == 0 {
            (0, 1)
        } else {
            let d = total * s0 - n0 * sum_all;
            (d * d, n0 * n1)
        };
        let better = match best {
            None => true,
            Some((bn, bd)) => greater_fraction(num, den, bn, bd),
        };
        if better {
            best = Some((num, den));
            best_t = t;
        }
    }
    best_t as u8
}

/// `a/b > c/d` for non-negative numerators and positive denominators,
/// falling back to floating point if the cross products overflow.
fn greater_fraction(a: i128, b: i128, c: i128, d: i128) -> bool {
    match (a.checked_mul(d), c.checked_mul(b)) {
        (Some(l), Some(r)) => l > r,
        _ => (a as f64 / b as f64) > (c as f64 / d as f64),
    }
}

/// Intermediate Canny products, exposed for inspection and tests.
#[derive(Debug, Clone)]
pub struct CannyTrace {
    pub otsu: u8,
    pub low: f64,
    pub high: f64,
    pub magnitude: Vec<f64>,
    /// Quantized gradient direction per pixel: 0, 45, 90 or 135 degrees.
    pub direction: Vec<u16>,
    pub suppressed: Vec<f64>,
    pub edges: GrayImage,
}

/// Canny edge map (0 or 255) with Otsu-derived hysteresis thresholds.
pub fn adaptive_canny(img: &GrayImage, cfg: &EdgeConfig) -> Result<GrayImage> {
    Ok(adaptive_canny_traced(img, cfg)?.edges)
}

pub fn adaptive_canny_traced(img: &GrayImage, cfg: &EdgeConfig) -> Result<CannyTrace> {
    cfg.validate()?;
    let (w, h) = (img.width(), img.height());
    let otsu = otsu_threshold(img);
    let (low, high) = cfg.hysteresis_thresholds(otsu);
    let smooth = gaussian_blur_f64(&img.to_f64(), w, h, cfg.gaussian_sigma, cfg.gaussian_radius);

    let (magnitude, direction) = sobel(&smooth, w, h);
    let suppressed = non_max_suppression(&magnitude, &direction, w, h);
    let edges = hysteresis(&suppressed, w, h, low, high);
    Ok(CannyTrace { otsu, low, high, magnitude, direction, suppressed, edges })
}

fn sobel(v: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<u16>) {
    let at = |x: isize, y: isize| v[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize];
    let mut mag = vec![0.0; w * h];
    let mut dir = vec![0u16; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            mag[i] = gx.hypot(gy);
            dir[i] = quantize_direction(gy.atan2(gx).to_degrees());
        }
    }
    (mag, dir)
}

/// Folds an angle into `[0, 180)` and picks one of four bins with
/// boundaries at 22.5, 67.5, 112.5 and 157.5 degrees; a boundary angle
/// belongs to the lower bin.
pub fn quantize_direction(deg: f64) -> u16 {
    let a = deg.rem_euclid(180.0);
    if a <= 22.5 {
        0
    } else if a <= 67.5 {
        45
    } else if a <= 112.5 {
        90
    } else if a <= 157.5 {
        135
    } else {
        0
    }
}

/// Keeps a pixel when it beats its neighbour on the negative side of the
/// gradient strictly and is at least as large as the one on the positive
/// side. The asymmetry keeps exactly one pixel of a symmetric ridge.
fn non_max_suppression(mag: &[f64], dir: &[u16], w: usize, h: usize) -> Vec<f64> {
    let get = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let m = mag[i];
            if m <= EDGE_MAGNITUDE_FLOOR {
                continue;
            }
            // image y grows downward, so the 45 degree gradient points to (+1, +1)
            let (dx, dy) = match dir[i] {
                0 => (1, 0),
                45 => (1, 1),
                90 => (0, 1),
                _ => (-1, 1),
            };
            if m > get(x - dx, y - dy) && m >= get(x + dx, y + dy) {
                out[i] = m;
            }
        }
    }
    out
}

/// Strong pixels (`>= high`) seed 8-connected growth through weak pixels
/// (`>= low`).
fn hysteresis(sup: &[f64], w: usize, h: usize, low: f64, high: f64) -> GrayImage {
    let mut out = vec![0u8; w * h];
    let mut stack = Vec::new();
    for i in 0..w * h {
        if sup[i] > 0.0 && sup[i] >= high && out[i] == 0 {
            out[i] = 255;
            stack.push(i);
            while let Some(j) = stack.pop() {
                let (jx, jy) = ((j % w) as isize, (j / w) as isize);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (jx + dx, jy + dy);
                        if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                            continue;
                        }
                        let k = ny as usize * w + nx as usize;
                        if out[k] == 0 && sup[k] > 0.0 && sup[k] >= low {
                            out[k] = 255;
                            stack.push(k);
                        }
                    }
                }
            }
        }
    }
    GrayImage::new(w, h, out).expect("dimensions preserved")
}
