//! Dense row-major `f64` tensors.
//!
//! Feature maps follow the `(N, C, H, W)` convention. The type is deliberately
//! small: shape bookkeeping, elementwise helpers and the flat text format used
//! by golden files. All neural-block math lives in [`crate::ops`].

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{dim_err, invalid, io_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting a shape/length mismatch and any non-finite
    /// value.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let t = Self::new_allow_nonfinite(shape, data)?;
        if let Some(i) = t.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value {} at flat index {i}",
                t.data[i]
            )));
        }
        Ok(t)
    }

    /// Like [`Tensor::new`] but lets NaN and infinities through.
    pub fn new_allow_nonfinite(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(dim_err(format!("shape {shape:?} must be non-empty with positive extents")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(dim_err(format!(
                "shape {shape:?} holds {n} values but buffer has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        assert!(n > 0, "shape {shape:?} must have positive extents");
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        assert!(n > 0, "shape {shape:?} must have positive extents");
        Self { shape: shape.to_vec(), data: (0..n).map(&mut f).collect() }
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn random_uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        Self::from_fn(shape, |_| rng.random_range(lo..hi))
    }

    /// Standard normal samples.
    pub fn random_normal<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        Self::from_fn(shape, |_| StandardNormal.sample(rng))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Returns `(N, C, H, W)` or a dimension error for any other rank.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(dim_err(format!("expected a rank-4 (N,C,H,W) tensor, got shape {:?}", self.shape))),
        }
    }

    /// Returns `(rows, cols)` for a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(dim_err(format!("expected a rank-2 tensor, got shape {:?}", self.shape))),
        }
    }

    #[inline]
    pub fn at4(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        let (_, cc, h, w) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        self.data[((n * cc + c) * h + y) * w + x]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(dim_err(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.expect_same_shape(other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn expect_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(dim_err(format!("shape mismatch: {:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    /// Largest absolute elementwise difference. Panics on shape mismatch,
    /// since it is only used to compare tensors that must agree.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on mismatched shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// One `(H, W)` channel plane of sample `n`, as a slice.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let (_, cc, h, w) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        let start = (n * cc + c) * h * w;
        &self.data[start..start + h * w]
    }

    /// Serializes to the flat text format: a `shape:` line followed by one
    /// value per line in row-major order. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 20 + 32);
        out.push_str("shape:");
        for d in &self.shape {
            let _ = write!(out, " {d}");
        }
        out.push('\n');
        for v in &self.data {
            let _ = writeln!(out, "{v:?}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty tensor file".into()))?;
        let dims = header
            .trim()
            .strip_prefix("shape:")
            .ok_or_else(|| Error::Parse(format!("expected `shape:` header, got {header:?}")))?;
        let shape = dims
            .split_whitespace()
            .map(|d| d.parse::<usize>().map_err(|e| Error::Parse(format!("bad extent {d:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let data = lines
            .flat_map(str::split_whitespace)
            .map(|v| v.parse::<f64>().map_err(|e| Error::Parse(format!("bad value {v:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new_allow_nonfinite(shape, data)
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(io_err(path))
    }

    pub fn read_text(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_text(&text)
    }
}

/// Concatenates rank-4 tensors along the channel axis.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| invalid("concat of zero tensors"))?;
    let (n, _, h, w) = first.dims4()?;
    let mut total_c = 0;
    for p in parts {
        let (pn, pc, ph, pw) = p.dims4()?;
        if (pn, ph, pw) != (n, h, w) {
            return Err(dim_err(format!(
                "concat expects matching N,H,W: {:?} vs {:?}",
                first.shape(),
                p.shape()
            )));
        }
        total_c += pc;
    }
    let mut data = Vec::with_capacity(n * total_c * h * w);
    for b in 0..n {
        for p in parts {
            let c = p.shape()[1];
            let start = b * c * h * w;
            data.extend_from_slice(&p.data()[start..start + c * h * w]);
        }
    }
    Tensor::new_allow_nonfinite(vec![n, total_c, h, w], data)
}

/// Splits a rank-4 tensor along channels into pieces of the given sizes.
pub fn split_channels(x: &Tensor, sizes: &[usize]) -> Result<Vec<Tensor>> {
    let (n, c, h, w) = x.dims4()?;
    if sizes.iter().sum::<usize>() != c {
        return Err(dim_err(format!("split sizes {sizes:?} do not sum to {c} channels")));
    }
    let mut out = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &s in sizes {
        let mut data = Vec::with_capacity(n * s * h * w);
        for b in 0..n {
            let start = (b * c + offset) * h * w;
            data.extend_from_slice(&x.data()[start..start + s * h * w]);
        }
        out.push(Tensor::new_allow_nonfinite(vec![n, s, h, w], data)?);
        offset += s;
    }
    Ok(out)
}
