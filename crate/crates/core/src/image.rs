//! 8-bit grayscale images with binary PGM (P5) and PNG I/O.

use std::path::Path;

use crate::error::{dim_err, io_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(dim_err(format!("image must be non-empty, got {width}x{height}")));
        }
        if width * height != data.len() {
            return Err(dim_err(format!("{width}x{height} image needs {} bytes, got {}", width * height, data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self::new(width, height, vec![value; width * height]).expect("positive extents")
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data).expect("positive extents")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// `(1, 1, H, W)` tensor with intensities divided by `scale`.
    pub fn to_tensor(&self, scale: f64) -> Tensor {
        Tensor::new(vec![1, 1, self.height, self.width], self.data.iter().map(|&v| v as f64 / scale).collect())
            .expect("shape matches buffer")
    }

    /// Intensities as `f64` in `[0, 255]`, row-major.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    /// Builds an image from `f64` samples, rounding and clamping to `[0, 255]`.
    pub fn from_f64(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        Self::new(width, height, values.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect())
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // skip whitespace and comments
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Parse("truncated PGM header".into()));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| Error::Parse("non-ASCII PGM header".into()))?);
        }
        if fields[0] != "P5" {
            return Err(Error::Parse(format!("expected binary PGM magic P5, got {:?}", fields[0])));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("bad PGM header field {s:?}: {e}")));
        let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        if maxval != 255 {
            return Err(Error::Parse(format!("only 8-bit PGM (maxval 255) is supported, got {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let raster = bytes.get(pos..pos + width * height).ok_or_else(|| Error::Parse("truncated PGM raster".into()))?;
        Self::new(width, height, raster.to_vec())
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_pgm()).map_err(io_err(path))
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer length checked at construction");
        img.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
        Ok(())
    }

    /// Reads a PGM (by `.pgm` extension) or any PNG, converting color PNGs
    /// to luma.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        let is_pgm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) || bytes.starts_with(b"P5");
        if is_pgm {
            return Self::from_pgm(&bytes);
        }
        let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)?.into_luma8();
        let (w, h) = img.dimensions();
        Self::new(w as usize, h as usize, img.into_raw())
    }

    /// Writes PGM or PNG depending on the extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            self.write_png(path)
        } else {
            self.write_pgm(path)
        }
    }
}

/// Separable Gaussian blur with clamp-to-edge borders; `radius` taps on each
/// side of the center, weights normalized to sum to one.
pub fn gaussian_blur_f64(values: &[f64], width: usize, height: usize, sigma: f64, radius: usize) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma, radius);
    let r = radius as isize;
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut tmp = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * values[y * width + clamp(x as isize + k as isize - r, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp[clamp(y as isize + k as isize - r, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let raw: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}
