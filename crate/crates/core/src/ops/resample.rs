use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// Bilinear resize with the half-pixel (align-corners = false) convention.
/// Source coordinates are clamped to the image, so borders replicate.
pub fn resize_bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if out_h == 0 || out_w == 0 {
        return Err(invalid("resize target must be at least 1x1"));
    }
    if (out_h, out_w) == (h, w) {
        return Ok(x.clone());
    }
    let ys = sample_positions(h, out_h);
    let xs = sample_positions(w, out_w);
    let mut out = Vec::with_capacity(n * c * out_h * out_w);
    for b in 0..n {
        for ch in 0..c {
            let plane = x.plane(b, ch);
            for &(y0, y1, fy) in &ys {
                for &(x0, x1, fx) in &xs {
                    let top = lerp(plane[y0 * w + x0], plane[y0 * w + x1], fx);
                    let bottom = lerp(plane[y1 * w + x0], plane[y1 * w + x1], fx);
                    out.push(lerp(top, bottom, fy));
                }
            }
        }
    }
    Tensor::new_allow_nonfinite(vec![n, c, out_h, out_w], out)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

fn sample_positions(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}
