//! Grouped 2-D cross-correlation with zero padding (NCHW).

use rand::Rng;

use crate::error::{dim_err, invalid, Result};
use crate::tensor::Tensor;

/// Weights and geometry of one convolution.
///
/// `weight` has shape `(out_c, in_c / groups, k_h, k_w)`. A depthwise
/// convolution is `groups == in_c` with one input channel per kernel; a 1x1
/// kernel is a pointwise projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Option<Vec<f64>>,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

/// Half-width of the uniform range used for seeded initialization.
pub const INIT_RANGE: f64 = 0.05;

impl ConvParams {
    pub fn new(weight: Tensor, bias: Option<Vec<f64>>, stride: usize, padding: usize, groups: usize) -> Result<Self> {
        let p = Self { weight, bias, stride, padding, groups };
        p.validate()?;
        Ok(p)
    }

    /// Seeded uniform weights and bias in `[-INIT_RANGE, INIT_RANGE]`.
    pub fn seeded<R: Rng + ?Sized>(
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        rng: &mut R,
    ) -> Result<Self> {
        check_groups(in_c, out_c, groups)?;
        let weight = Tensor::random_uniform(&[out_c, in_c / groups, kernel, kernel], -INIT_RANGE, INIT_RANGE, rng);
        let bias = (0..out_c).map(|_| rng.random_range(-INIT_RANGE..INIT_RANGE)).collect();
        Self::new(weight, Some(bias), stride, padding, groups)
    }

    /// Seeded weights with a zero bias.
    pub fn seeded_zero_bias<R: Rng + ?Sized>(
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::seeded(in_c, out_c, kernel, stride, padding, groups, rng)?;
        p.bias = Some(vec![0.0; out_c]);
        Ok(p)
    }

    /// All-zero weights and bias.
    pub fn zeros(in_c: usize, out_c: usize, kernel: usize, stride: usize, padding: usize, groups: usize) -> Result<Self> {
        check_groups(in_c, out_c, groups)?;
        Self::new(
            Tensor::zeros(&[out_c, in_c / groups, kernel, kernel]),
            Some(vec![0.0; out_c]),
            stride,
            padding,
            groups,
        )
    }

    /// Pointwise identity on `c` channels.
    pub fn identity_1x1(c: usize) -> Self {
        let weight = Tensor::from_fn(&[c, c, 1, 1], |i| if i / c == i % c { 1.0 } else { 0.0 });
        Self { weight, bias: Some(vec![0.0; c]), stride: 1, padding: 0, groups: 1 }
    }

    /// Depthwise identity with an odd `kernel`, padded to keep spatial size.
    pub fn identity_depthwise(c: usize, kernel: usize) -> Self {
        assert!(kernel % 2 == 1, "identity kernel must have odd size");
        let center = kernel / 2;
        let weight = Tensor::from_fn(&[c, 1, kernel, kernel], |i| {
            let r = i % (kernel * kernel);
            if r == center * kernel + center {
                1.0
            } else {
                0.0
            }
        });
        Self { weight, bias: Some(vec![0.0; c]), stride: 1, padding: center, groups: c }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1] * self.groups
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.shape()[2], self.weight.shape()[3])
    }

    pub fn is_zero(&self) -> bool {
        self.weight.data().iter().all(|&v| v == 0.0)
            && self.bias.as_ref().is_none_or(|b| b.iter().all(|&v| v == 0.0))
    }

    fn validate(&self) -> Result<()> {
        let shape = self.weight.shape();
        if shape.len() != 4 {
            return Err(dim_err(format!("conv weight must be rank 4, got {shape:?}")));
        }
        if self.stride == 0 {
            return Err(invalid("conv stride must be positive"));
        }
        if self.groups == 0 {
            return Err(invalid("conv groups must be positive"));
        }
        check_groups(self.in_channels(), self.out_channels(), self.groups)?;
        if let Some(b) = &self.bias {
            if b.len() != self.out_channels() {
                return Err(dim_err(format!("bias has {} entries for {} output channels", b.len(), self.out_channels())));
            }
        }
        Ok(())
    }
}

fn check_groups(in_c: usize, out_c: usize, groups: usize) -> Result<()> {
    if groups == 0 || in_c % groups != 0 || out_c % groups != 0 {
        return Err(dim_err(format!("channels {in_c}->{out_c} not divisible by {groups} groups")));
    }
    Ok(())
}

/// Output extent along one axis; `None` when the kernel does not fit.
pub fn conv_output_size(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    (padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

pub fn conv2d(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if c != p.in_channels() {
        return Err(dim_err(format!("conv expects {} input channels, got {c}", p.in_channels())));
    }
    let (kh, kw) = p.kernel();
    let oh = conv_output_size(h, kh, p.stride, p.padding)
        .ok_or_else(|| dim_err(format!("kernel {kh}x{kw} larger than padded input {h}x{w}")))?;
    let ow = conv_output_size(w, kw, p.stride, p.padding)
        .ok_or_else(|| dim_err(format!("kernel {kh}x{kw} larger than padded input {h}x{w}")))?;
    let out_c = p.out_channels();
    let in_per_group = c / p.groups;
    let out_per_group = out_c / p.groups;
    let wdata = p.weight.data();
    let xdata = x.data();
    let pad = p.padding as isize;
    let mut out = vec![0.0; n * out_c * oh * ow];

    for b in 0..n {
        for oc in 0..out_c {
            let g = oc / out_per_group;
            let bias = p.bias.as_ref().map_or(0.0, |bv| bv[oc]);
            let out_plane = &mut out[(b * out_c + oc) * oh * ow..][..oh * ow];
            out_plane.fill(bias);
            for icg in 0..in_per_group {
                let ic = g * in_per_group + icg;
                let in_plane = &xdata[(b * c + ic) * h * w..][..h * w];
                let kernel = &wdata[(oc * in_per_group + icg) * kh * kw..][..kh * kw];
                for oy in 0..oh {
                    let iy0 = (oy * p.stride) as isize - pad;
                    for ky in 0..kh {
                        let iy = iy0 + ky as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &in_plane[iy as usize * w..][..w];
                        let krow = &kernel[ky * kw..][..kw];
                        for ox in 0..ow {
                            let ix0 = (ox * p.stride) as isize - pad;
                            let mut acc = 0.0;
                            for (kx, &kv) in krow.iter().enumerate() {
                                let ix = ix0 + kx as isize;
                                if ix >= 0 && ix < w as isize {
                                    acc += kv * row[ix as usize];
                                }
                            }
                            out_plane[oy * ow + ox] += acc;
                        }
                    }
                }
            }
        }
    }
    Tensor::new_allow_nonfinite(vec![n, out_c, oh, ow], out)
}
