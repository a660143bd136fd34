//! Channel permutations and lossless spatial/channel reshuffles.

use crate::error::{dim_err, invalid, Result};
use crate::tensor::Tensor;

/// Reshapes channels to `(groups, C / groups)`, transposes and flattens.
/// Output channel `i * groups + j` is input channel `j * (C / groups) + i`.
pub fn channel_shuffle(x: &Tensor, groups: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if groups == 0 || c % groups != 0 {
        return Err(dim_err(format!("{c} channels not divisible into {groups} shuffle groups")));
    }
    let per = c / groups;
    let plane = h * w;
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for i in 0..per {
            for j in 0..groups {
                let src = (b * c + j * per + i) * plane;
                let dst = (b * c + i * groups + j) * plane;
                out[dst..dst + plane].copy_from_slice(&x.data()[src..src + plane]);
            }
        }
    }
    Tensor::new_allow_nonfinite(x.shape().to_vec(), out)
}

/// The source channel feeding each output channel of [`channel_shuffle`].
pub fn shuffle_permutation(channels: usize, groups: usize) -> Result<Vec<usize>> {
    if groups == 0 || channels % groups != 0 {
        return Err(dim_err(format!("{channels} channels not divisible into {groups} shuffle groups")));
    }
    let per = channels / groups;
    Ok((0..channels).map(|o| (o % groups) * per + o / groups).collect())
}

/// Moves each `block x block` spatial patch into channels.
///
/// `(N, C, H, W) -> (N, C * block², H / block, W / block)`. Output channel
/// `(dy * block + dx) * C + c` holds input channel `c` at offset `(dy, dx)`
/// inside each block.
pub fn space_to_depth(x: &Tensor, block: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if block == 0 {
        return Err(invalid("space_to_depth block must be positive"));
    }
    if h % block != 0 || w % block != 0 {
        return Err(dim_err(format!("{h}x{w} not divisible by block {block}")));
    }
    let (oh, ow) = (h / block, w / block);
    let oc = c * block * block;
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for dy in 0..block {
            for dx in 0..block {
                for ch in 0..c {
                    let o = (dy * block + dx) * c + ch;
                    for y in 0..oh {
                        for xx in 0..ow {
                            out[((b * oc + o) * oh + y) * ow + xx] = x.at4(b, ch, y * block + dy, xx * block + dx);
                        }
                    }
                }
            }
        }
    }
    Tensor::new_allow_nonfinite(vec![n, oc, oh, ow], out)
}

/// Inverse of [`space_to_depth`].
pub fn depth_to_space(x: &Tensor, block: usize) -> Result<Tensor> {
    let (n, oc, oh, ow) = x.dims4()?;
    if block == 0 || oc % (block * block) != 0 {
        return Err(dim_err(format!("{oc} channels not divisible by block² = {}", block * block)));
    }
    let c = oc / (block * block);
    let (h, w) = (oh * block, ow * block);
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for dy in 0..block {
            for dx in 0..block {
                for ch in 0..c {
                    let o = (dy * block + dx) * c + ch;
                    for y in 0..oh {
                        for xx in 0..ow {
                            out[((b * c + ch) * h + y * block + dy) * w + xx * block + dx] = x.at4(b, o, y, xx);
                        }
                    }
                }
            }
        }
    }
    Tensor::new_allow_nonfinite(vec![n, c, h, w], out)
}
