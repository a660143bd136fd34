use crate::error::{dim_err, invalid, Result};
use crate::tensor::Tensor;

/// Group normalization without affine parameters: each `(sample, group)`
/// slice is shifted to mean 0 and scaled by `1 / sqrt(var + eps)`.
pub fn group_norm(x: &Tensor, num_groups: usize, eps: f64) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if num_groups == 0 || c % num_groups != 0 {
        return Err(dim_err(format!("{c} channels not divisible into {num_groups} groups")));
    }
    if !(eps > 0.0) {
        return Err(invalid(format!("group_norm eps must be positive, got {eps}")));
    }
    let group_len = c / num_groups * h * w;
    let mut out = x.clone();
    for chunk in out.data_mut().chunks_exact_mut(group_len) {
        let mean = chunk.iter().sum::<f64>() / group_len as f64;
        let var = chunk.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / group_len as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for v in chunk.iter_mut() {
            *v = (*v - mean) * inv;
        }
    }
    debug_assert_eq!(out.len(), n * c * h * w);
    Ok(out)
}

/// Vector-Jacobian product of [`group_norm`]: given upstream gradient `g`
/// with respect to the output, returns the gradient with respect to `x`.
///
/// Per group with `xhat = (x - mean) * inv` and `M` elements:
/// `dx = inv * (g - mean(g) - xhat * mean(g * xhat))`.
pub fn group_norm_vjp(x: &Tensor, g: &Tensor, num_groups: usize, eps: f64) -> Result<Tensor> {
    x.expect_same_shape(g)?;
    let (_, c, h, w) = x.dims4()?;
    if num_groups == 0 || c % num_groups != 0 {
        return Err(dim_err(format!("{c} channels not divisible into {num_groups} groups")));
    }
    let m = c / num_groups * h * w;
    let mut out = Vec::with_capacity(x.len());
    for (xs, gs) in x.data().chunks_exact(m).zip(g.data().chunks_exact(m)) {
        let mean = xs.iter().sum::<f64>() / m as f64;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
        let inv = 1.0 / (var + eps).sqrt();
        let g_mean = gs.iter().sum::<f64>() / m as f64;
        let gx_mean = xs.iter().zip(gs).map(|(xv, gv)| gv * (xv - mean) * inv).sum::<f64>() / m as f64;
        out.extend(xs.iter().zip(gs).map(|(xv, gv)| inv * (gv - g_mean - (xv - mean) * inv * gx_mean)));
    }
    Tensor::new_allow_nonfinite(x.shape().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::seeded_rng;
    use crate::tolerance::GROUP_NORM_EPS;

    #[test]
    fn constant_input_normalizes_to_zero() {
        let x = Tensor::full(&[1, 4, 3, 3], 7.25);
        let y = group_norm(&x, 2, GROUP_NORM_EPS).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn idempotent_on_normalized_input() {
        let mut rng = seeded_rng(4);
        let x = Tensor::random_uniform(&[2, 4, 3, 3], -3.0, 3.0, &mut rng);
        let once = group_norm(&x, 2, GROUP_NORM_EPS).unwrap();
        let twice = group_norm(&once, 2, GROUP_NORM_EPS).unwrap();
        assert!(once.max_abs_diff(&twice) < 1e-6);
    }

    #[test]
    fn matches_naive_per_group_statistics() {
        let mut rng = seeded_rng(5);
        let x = Tensor::random_uniform(&[2, 4, 3, 3], -2.0, 5.0, &mut rng);
        let y = group_norm(&x, 2, GROUP_NORM_EPS).unwrap();
        for b in 0..2 {
            for g in 0..2 {
                let mut vals = Vec::new();
                for c in 2 * g..2 * g + 2 {
                    for yy in 0..3 {
                        for xx in 0..3 {
                            vals.push(x.at4(b, c, yy, xx));
                        }
                    }
                }
                let mean = vals.iter().sum::<f64>() / 18.0;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 18.0;
                for c in 2 * g..2 * g + 2 {
                    for yy in 0..3 {
                        for xx in 0..3 {
                            let expect = (x.at4(b, c, yy, xx) - mean) / (var + GROUP_NORM_EPS).sqrt();
                            assert!((y.at4(b, c, yy, xx) - expect).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn indivisible_channels_rejected() {
        let x = Tensor::zeros(&[1, 3, 2, 2]);
        assert!(matches!(group_norm(&x, 2, 1e-5), Err(crate::Error::Dimension(_))));
    }
}
