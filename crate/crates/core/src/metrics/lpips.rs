//! The perceptual-distance aggregation: per layer, feature vectors at each
//! spatial site are unit-normalized over channels, squared differences are
//! summed over channels and averaged over sites, and layers are combined
//! with non-negative weights. Feature extraction is the caller's concern.

use crate::error::{dim_err, invalid, Result};
use crate::metrics::stable_sum;
use crate::tensor::Tensor;
use crate::tolerance::LPIPS_NORM_EPS;

/// One layer's activations for the two images, `(N, C, H, W)` each.
#[derive(Debug, Clone, PartialEq)]
pub struct LpipsLayer {
    pub x: Tensor,
    pub y: Tensor,
    pub weight: f64,
}

/// Divides each channel vector by its L2 norm plus a small epsilon.
pub fn unit_normalize_channels(t: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = t.dims4()?;
    let plane = h * w;
    let mut out = t.clone();
    for b in 0..n {
        for s in 0..plane {
            let norm = (0..c).map(|ch| t.data()[(b * c + ch) * plane + s].powi(2)).sum::<f64>().sqrt();
            for ch in 0..c {
                out.data_mut()[(b * c + ch) * plane + s] /= norm + LPIPS_NORM_EPS;
            }
        }
    }
    Ok(out)
}

/// Distance contributed by one layer before weighting.
pub fn layer_distance(x: &Tensor, y: &Tensor) -> Result<f64> {
    x.expect_same_shape(y)?;
    let (n, c, h, w) = x.dims4()?;
    let (nx, ny) = (unit_normalize_channels(x)?, unit_normalize_channels(y)?);
    let plane = h * w;
    let per_site = (0..n * plane).map(|i| {
        let (b, s) = (i / plane, i % plane);
        (0..c)
            .map(|ch| {
                let k = (b * c + ch) * plane + s;
                (nx.data()[k] - ny.data()[k]).powi(2)
            })
            .sum::<f64>()
    });
    Ok(stable_sum(per_site) / (n * plane) as f64)
}

pub fn lpips_form(layers: &[LpipsLayer]) -> Result<f64> {
    if layers.is_empty() {
        return Err(invalid("LPIPS needs at least one layer"));
    }
    let mut terms = Vec::with_capacity(layers.len());
    for (i, l) in layers.iter().enumerate() {
        if !(l.weight >= 0.0) {
            return Err(invalid(format!("layer {i} weight {} must be non-negative", l.weight)));
        }
        if l.x.shape() != l.y.shape() {
            return Err(dim_err(format!("layer {i} shapes differ: {:?} vs {:?}", l.x.shape(), l.y.shape())));
        }
        terms.push(l.weight * layer_distance(&l.x, &l.y)?);
    }
    Ok(stable_sum(terms))
}

/// Hand-built feature pyramid for images without a pretrained backbone.
/// Level 0 is the `(1, 1, H, W)` input; each further level halves the
/// previous one by 2x2 averaging (odd edges dropped). At every level the
/// three channels are intensity offset by one (so flat regions still have
/// a direction), the horizontal and the vertical central difference with
/// zero padding.
pub fn gradient_pyramid(img: &Tensor, levels: usize) -> Result<Vec<Tensor>> {
    let (n, c, mut h, mut w) = img.dims4()?;
    if n != 1 || c != 1 {
        return Err(dim_err(format!("gradient pyramid takes a (1, 1, H, W) image, got {:?}", img.shape())));
    }
    if levels == 0 {
        return Err(invalid("gradient pyramid needs at least one level"));
    }
    let mut plane = img.data().to_vec();
    let mut out = Vec::with_capacity(levels);
    for level in 0..levels {
        if level > 0 {
            let (nh, nw) = (h / 2, w / 2);
            if nh == 0 || nw == 0 {
                return Err(dim_err(format!("image too small for {levels} pyramid levels")));
            }
            plane = (0..nh * nw)
                .map(|i| {
                    let (y, x) = (2 * (i / nw), 2 * (i % nw));
                    (plane[y * w + x] + plane[y * w + x + 1] + plane[(y + 1) * w + x] + plane[(y + 1) * w + x + 1]) / 4.0
                })
                .collect();
            (h, w) = (nh, nw);
        }
        let at = |y: isize, x: isize| {
            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                0.0
            } else {
                plane[y as usize * w + x as usize]
            }
        };
        let mut data = Vec::with_capacity(3 * h * w);
        data.extend(plane.iter().map(|v| v + 1.0));
        for dir in [(0isize, 1isize), (1, 0)] {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    data.push((at(y + dir.0, x + dir.1) - at(y - dir.0, x - dir.1)) / 2.0);
                }
            }
        }
        out.push(Tensor::new(vec![1, 3, h, w], data)?);
    }
    Ok(out)
}
