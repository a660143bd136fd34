//! Traditional augmentations with exact box bookkeeping: flips, rotations
//! by multiples of 90 degrees clockwise, and Gaussian blur.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::defect::{BBox, DefectInstance};
use crate::error::{invalid, Result};
use crate::image::{gaussian_blur_f64, GrayImage};

/// Range of blur sigmas drawn by [`random_op`].
pub const BLUR_SIGMA_RANGE: (f64, f64) = (0.5, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentOp {
    Hflip,
    Vflip,
    /// `k` quarter turns clockwise, `k` in 1..=3.
    Rotate90 { k: u8 },
    GaussianBlur { sigma: f64 },
}

impl AugmentOp {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Rotate90 { k } if !(1..=3).contains(&k) => Err(invalid(format!("rotation count {k} outside 1..=3"))),
            Self::GaussianBlur { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(invalid(format!("blur sigma {sigma} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// Output `(width, height)` for a `w x h` input.
    pub fn output_size(&self, w: usize, h: usize) -> (usize, usize) {
        match self {
            Self::Rotate90 { k } if k % 2 == 1 => (h, w),
            _ => (w, h),
        }
    }

    /// Maps one box from a `w x h` image into the augmented frame.
    pub fn transform_box(&self, b: &BBox, w: usize, h: usize) -> BBox {
        let (wf, hf) = (w as f64, h as f64);
        match *self {
            Self::Hflip => BBox::new(wf - b.x - b.w, b.y, b.w, b.h),
            Self::Vflip => BBox::new(b.x, hf - b.y - b.h, b.w, b.h),
            Self::Rotate90 { k } => {
                let (mut bx, mut cw, mut ch) = (*b, wf, hf);
                for _ in 0..k {
                    bx = BBox::new(ch - bx.y - bx.h, bx.x, bx.h, bx.w);
                    (cw, ch) = (ch, cw);
                }
                bx
            }
            Self::GaussianBlur { .. } => *b,
        }
    }
}

/// One quarter turn clockwise: pixel `(x, y)` moves to `(H - 1 - y, x)`.
fn rotate_cw(img: &GrayImage) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    GrayImage::from_fn(h, w, |nx, ny| img.get(ny, h - 1 - nx))
}

pub fn apply_augment(img: &GrayImage, instances: &[DefectInstance], op: &AugmentOp) -> Result<(GrayImage, Vec<DefectInstance>)> {
    op.validate()?;
    let (w, h) = (img.width(), img.height());
    for inst in instances {
        inst.validate(w, h)?;
    }
    let out = match *op {
        AugmentOp::Hflip => GrayImage::from_fn(w, h, |x, y| img.get(w - 1 - x, y)),
        AugmentOp::Vflip => GrayImage::from_fn(w, h, |x, y| img.get(x, h - 1 - y)),
        AugmentOp::Rotate90 { k } => (0..k).fold(img.clone(), |acc, _| rotate_cw(&acc)),
        AugmentOp::GaussianBlur { sigma } => {
            let radius = (3.0 * sigma).ceil() as usize;
            GrayImage::from_f64(w, h, &gaussian_blur_f64(&img.to_f64(), w, h, sigma, radius))?
        }
    };
    let (ow, oh) = op.output_size(w, h);
    let boxes = instances
        .iter()
        .map(|i| {
            let moved = DefectInstance::new(i.class, op.transform_box(&i.bbox, w, h));
            moved.validate(ow, oh).map(|_| moved)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((out, boxes))
}

/// Uniform choice among the four kinds, then uniform parameters.
pub fn random_op<R: Rng + ?Sized>(rng: &mut R) -> AugmentOp {
    match rng.random_range(0..4) {
        0 => AugmentOp::Hflip,
        1 => AugmentOp::Vflip,
        2 => AugmentOp::Rotate90 { k: rng.random_range(1..=3) },
        _ => AugmentOp::GaussianBlur { sigma: rng.random_range(BLUR_SIGMA_RANGE.0..=BLUR_SIGMA_RANGE.1) },
    }
}
