//! Shift-wise convolution: channel groups are translated by one pixel in
//! fixed directions with zero fill, then a depthwise conv mixes space.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Result};
use crate::ops::{conv2d, ConvParams};
use crate::tensor::Tensor;

/// One of the eight unit offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
    UpLeft,
    UpRight,
    DownLeft,
    DownRight,
}

impl Direction {
    /// Default assignment order for groups.
    pub const ALL: [Direction; 8] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
        Direction::UpLeft,
        Direction::UpRight,
        Direction::DownLeft,
        Direction::DownRight,
    ];

    /// `(dy, dx)` with `y` growing downwards.
    pub fn offset(self) -> (isize, isize) {
        match self {
            Self::Up => (-1, 0),
            Self::Down => (1, 0),
            Self::Left => (0, -1),
            Self::Right => (0, 1),
            Self::UpLeft => (-1, -1),
            Self::UpRight => (-1, 1),
            Self::DownLeft => (1, -1),
            Self::DownRight => (1, 1),
        }
    }
}

/// Group directions plus the depthwise conv applied after shifting.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSpec {
    pub directions: Vec<Direction>,
    pub dw: ConvParams,
}

/// Largest supported group count.
pub const MAX_SHIFT_GROUPS: usize = 8;

impl ShiftSpec {
    pub fn new(directions: Vec<Direction>, dw: ConvParams) -> Result<Self> {
        let s = Self { directions, dw };
        s.validate()?;
        Ok(s)
    }

    /// First `groups` directions of [`Direction::ALL`] with a seeded
    /// depthwise 3x3 conv on `channels`.
    pub fn seeded<R: Rng + ?Sized>(channels: usize, groups: usize, rng: &mut R) -> Result<Self> {
        if !(1..=MAX_SHIFT_GROUPS).contains(&groups) {
            return Err(invalid(format!("shift groups must be in 1..=8, got {groups}")));
        }
        if channels % groups != 0 {
            return Err(dim_err(format!("{channels} channels not divisible into {groups} shift groups")));
        }
        Self::new(Direction::ALL[..groups].to_vec(), ConvParams::seeded(channels, channels, 3, 1, 1, channels, rng)?)
    }

    pub fn groups(&self) -> usize {
        self.directions.len()
    }

    pub fn channels(&self) -> usize {
        self.dw.out_channels()
    }

    fn validate(&self) -> Result<()> {
        let g = self.groups();
        if !(1..=MAX_SHIFT_GROUPS).contains(&g) {
            return Err(invalid(format!("shift groups must be in 1..=8, got {g}")));
        }
        let c = self.channels();
        let (kh, kw) = self.dw.kernel();
        if self.dw.groups != c || self.dw.in_channels() != c || self.dw.stride != 1 || kh != kw || self.dw.padding != kh / 2 || kh % 2 == 0 {
            return Err(invalid("shift conv must be a shape-preserving depthwise conv"));
        }
        if c % g != 0 {
            return Err(dim_err(format!("{c} channels not divisible into {g} shift groups")));
        }
        Ok(())
    }
}

/// Translates contiguous channel group `g` by `directions[g]`.
pub fn shift_groups(x: &Tensor, directions: &[Direction]) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let g = directions.len();
    if g == 0 || c % g != 0 {
        return Err(dim_err(format!("{c} channels not divisible into {g} shift groups")));
    }
    let per = c / g;
    let mut out = Tensor::zeros(x.shape());
    let src = x.data();
    let dst = out.data_mut();
    for b in 0..n {
        for ch in 0..c {
            let (dy, dx) = directions[ch / per].offset();
            let base = (b * c + ch) * h * w;
            for y in 0..h {
                let sy = y as isize - dy;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for xx in 0..w {
                    let sx = xx as isize - dx;
                    if sx >= 0 && sx < w as isize {
                        dst[base + y * w + xx] = src[base + sy as usize * w + sx as usize];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Shift then depthwise conv; shape preserving.
pub fn shift_wise_conv(x: &Tensor, s: &ShiftSpec) -> Result<Tensor> {
    s.validate()?;
    let c = x.dims4()?.1;
    if c != s.channels() {
        return Err(dim_err(format!("shift conv configured for {} channels, got {c}", s.channels())));
    }
    conv2d(&shift_groups(x, &s.directions)?, &s.dw)
}
