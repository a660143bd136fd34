//! Condition modulation: group-normalized noise features are scaled by
//! `1 + alpha` and shifted by `beta`, both predicted from the condition
//! feature by depthwise convolutions, then the projected text embedding is
//! added as a per-channel constant.

use rand::Rng;

use crate::error::{dim_err, invalid, Result};
use crate::ops::{conv2d, group_norm, group_norm_vjp, ConvParams, Linear};
use crate::tensor::Tensor;
use crate::tolerance::GROUP_NORM_EPS;

#[derive(Debug, Clone, PartialEq)]
pub struct CondModParams {
    pub groups: usize,
    /// Depthwise, shape-preserving.
    pub alpha_conv: ConvParams,
    /// Depthwise, shape-preserving.
    pub beta_conv: ConvParams,
    /// Maps the prompt embedding to one value per channel.
    pub text_proj: Linear,
}

impl CondModParams {
    /// Seeded depthwise 3x3 kernels with zero biases and a seeded text
    /// projection with zero bias, so zero inputs give `alpha = beta = 0`.
    pub fn seeded<R: Rng + ?Sized>(channels: usize, groups: usize, text_dim: usize, rng: &mut R) -> Result<Self> {
        let p = Self {
            groups,
            alpha_conv: ConvParams::seeded_zero_bias(channels, channels, 3, 1, 1, channels, rng)?,
            beta_conv: ConvParams::seeded_zero_bias(channels, channels, 3, 1, 1, channels, rng)?,
            text_proj: Linear::seeded(text_dim, channels, rng),
        };
        p.validate()?;
        Ok(p)
    }

    /// All-zero convs: the block reduces to group norm plus text.
    pub fn identity(channels: usize, groups: usize, text_dim: usize) -> Result<Self> {
        let p = Self {
            groups,
            alpha_conv: ConvParams::zeros(channels, channels, 3, 1, 1, channels)?,
            beta_conv: ConvParams::zeros(channels, channels, 3, 1, 1, channels)?,
            text_proj: Linear::new(Tensor::zeros(&[channels, text_dim]), vec![0.0; channels])?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn channels(&self) -> usize {
        self.alpha_conv.out_channels()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        for (name, conv) in [("alpha", &self.alpha_conv), ("beta", &self.beta_conv)] {
            let (kh, kw) = conv.kernel();
            let same = conv.stride == 1 && kh % 2 == 1 && kh == kw && conv.padding == kh / 2;
            if conv.in_channels() != c || conv.out_channels() != c || conv.groups != c || !same {
                return Err(invalid(format!("{name} conv must be a shape-preserving depthwise conv on {c} channels")));
            }
        }
        if self.text_proj.out_dim() != c {
            return Err(dim_err(format!("text projection yields {} values for {c} channels", self.text_proj.out_dim())));
        }
        if self.groups == 0 || c % self.groups != 0 {
            return Err(dim_err(format!("{c} channels not divisible into {} groups", self.groups)));
        }
        Ok(())
    }

    /// Projects a prompt embedding to the `(C)` text term.
    pub fn project_text(&self, embedding: &Tensor) -> Result<Tensor> {
        self.text_proj.apply(embedding)
    }
}

/// `GroupNorm(noise) * (1 + alpha(cond)) + beta(cond) + text`, with `text`
/// of shape `(C)` broadcast over batch and space.
pub fn cond_mod(noise: &Tensor, cond: &Tensor, text: &Tensor, p: &CondModParams) -> Result<Tensor> {
    let (alpha, beta) = modulation(noise, cond, text, p)?;
    let normed = group_norm(noise, p.groups, GROUP_NORM_EPS)?;
    let (_, c, h, w) = noise.dims4()?;
    let plane = h * w;
    let t = text.data();
    let data = normed
        .data()
        .iter()
        .zip(alpha.data())
        .zip(beta.data())
        .enumerate()
        .map(|(i, ((n, a), b))| n * (1.0 + a) + b + t[(i / plane) % c])
        .collect();
    Tensor::new_allow_nonfinite(noise.shape().to_vec(), data)
}

/// Gradient of `sum(g * cond_mod(noise, ..))` with respect to `noise`:
/// the group-norm backward pass applied to `g * (1 + alpha)`.
pub fn cond_mod_vjp(noise: &Tensor, cond: &Tensor, text: &Tensor, g: &Tensor, p: &CondModParams) -> Result<Tensor> {
    noise.expect_same_shape(g)?;
    let (alpha, _) = modulation(noise, cond, text, p)?;
    let scaled = g.zip_map(&alpha, |gv, a| gv * (1.0 + a))?;
    group_norm_vjp(noise, &scaled, p.groups, GROUP_NORM_EPS)
}

fn modulation(noise: &Tensor, cond: &Tensor, text: &Tensor, p: &CondModParams) -> Result<(Tensor, Tensor)> {
    p.validate()?;
    noise.expect_same_shape(cond)?;
    let (_, c, _, _) = noise.dims4()?;
    if c != p.channels() {
        return Err(dim_err(format!("cond_mod configured for {} channels, got {c}", p.channels())));
    }
    if text.len() != c {
        return Err(dim_err(format!("text term has {} values for {c} channels", text.len())));
    }
    Ok((conv2d(cond, &p.alpha_conv)?, conv2d(cond, &p.beta_conv)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::seeded_rng;
    use crate::ops::grad_check;
    use crate::reference::naive_conv;

    #[test]
    fn zero_params_reduce_to_group_norm() {
        let p = CondModParams::identity(4, 2, 8).unwrap();
        let mut rng = seeded_rng(1);
        let x = Tensor::random_normal(&[2, 4, 5, 5], &mut rng);
        let cond = Tensor::random_normal(&[2, 4, 5, 5], &mut rng);
        let y = cond_mod(&x, &cond, &Tensor::zeros(&[4]), &p).unwrap();
        assert_eq!(y.max_abs_diff(&group_norm(&x, 2, GROUP_NORM_EPS).unwrap()), 0.0);
    }

    #[test]
    fn beta_bias_is_a_pure_shift() {
        let mut p = CondModParams::identity(4, 2, 8).unwrap();
        p.beta_conv.bias = Some(vec![0.25; 4]);
        let mut rng = seeded_rng(2);
        let x = Tensor::random_normal(&[1, 4, 3, 3], &mut rng);
        let cond = Tensor::random_normal(&[1, 4, 3, 3], &mut rng);
        let y = cond_mod(&x, &cond, &Tensor::zeros(&[4]), &p).unwrap();
        let expect = group_norm(&x, 2, GROUP_NORM_EPS).unwrap().map(|v| v + 0.25);
        assert!(y.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn matches_elementwise_oracle() {
        let mut rng = seeded_rng(3);
        let p = CondModParams::seeded(4, 2, 6, &mut rng).unwrap();
        let x = Tensor::random_normal(&[1, 4, 4, 4], &mut rng);
        let cond = Tensor::random_normal(&[1, 4, 4, 4], &mut rng);
        let text = Tensor::random_normal(&[4], &mut rng);
        let y = cond_mod(&x, &cond, &text, &p).unwrap();
        let alpha = naive_conv(&cond, &p.alpha_conv);
        let beta = naive_conv(&cond, &p.beta_conv);
        for c in 0..4 {
            let g = c / 2;
            let vals: Vec<f64> = (2 * g..2 * g + 2)
                .flat_map(|cc| (0..16).map(move |i| (cc, i)))
                .map(|(cc, i)| x.at4(0, cc, i / 4, i % 4))
                .collect();
            let mean = vals.iter().sum::<f64>() / 32.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 32.0;
            for yy in 0..4 {
                for xx in 0..4 {
                    let n = (x.at4(0, c, yy, xx) - mean) / (var + GROUP_NORM_EPS).sqrt();
                    let e = n * (1.0 + alpha.at4(0, c, yy, xx)) + beta.at4(0, c, yy, xx) + text.data()[c];
                    assert!((e - y.at4(0, c, yy, xx)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn analytic_gradient_passes_grad_check() {
        let mut rng = seeded_rng(4);
        let mut p = CondModParams::seeded(4, 2, 6, &mut rng).unwrap();
        p.alpha_conv.bias = Some(vec![0.3, -0.2, 0.1, 0.4]);
        let x = Tensor::random_normal(&[1, 4, 3, 3], &mut rng);
        let cond = Tensor::random_normal(&[1, 4, 3, 3], &mut rng);
        let text = Tensor::random_normal(&[4], &mut rng);
        let ones = Tensor::full(x.shape(), 1.0);
        // a random weighting exercises every output, not only the alpha term
        let w = Tensor::random_normal(x.shape(), &mut rng);
        let err = grad_check(
            |v| Ok(cond_mod(v, &cond, &text, &p)?.mul(&w)?.sum()),
            |v| cond_mod_vjp(v, &cond, &text, &w, &p),
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "relative error {err}");
        let err = grad_check(
            |v| Ok(cond_mod(v, &cond, &text, &p)?.sum()),
            |v| cond_mod_vjp(v, &cond, &text, &ones, &p),
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "relative error of plain sum {err}");
    }

    #[test]
    fn shape_errors() {
        let p = CondModParams::identity(4, 2, 8).unwrap();
        let x = Tensor::zeros(&[1, 4, 3, 3]);
        assert!(cond_mod(&x, &Tensor::zeros(&[1, 4, 3, 2]), &Tensor::zeros(&[4]), &p).is_err());
        assert!(cond_mod(&x, &x, &Tensor::zeros(&[3]), &p).is_err());
        assert!(cond_mod(&Tensor::zeros(&[1, 2, 3, 3]), &Tensor::zeros(&[1, 2, 3, 3]), &Tensor::zeros(&[4]), &p).is_err());
    }
}
