//! Fréchet distance between two Gaussian feature summaries.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, io_err, Error, Result};
use crate::metrics::stable_sum;
use crate::tolerance::{FID_NEGATIVE, PSD_EIGEN, SYMMETRY};

/// Mean vector and covariance matrix (row-major, `dim x dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    mean: Vec<f64>,
    cov: Vec<f64>,
}

impl FeatureStats {
    /// Checks symmetry and positive semi-definiteness.
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(dim_err("feature dimension must be positive"));
        }
        if cov.len() != d * d {
            return Err(dim_err(format!("covariance needs {} entries for dimension {d}, got {}", d * d, cov.len())));
        }
        if mean.iter().chain(&cov).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("feature statistics must be finite".into()));
        }
        let scale = cov.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            for j in i + 1..d {
                if (cov[i * d + j] - cov[j * d + i]).abs() > SYMMETRY * scale {
                    return Err(invalid(format!("covariance is not symmetric at ({i}, {j})")));
                }
            }
        }
        let smallest = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &cov)).eigenvalues.min();
        if smallest < -PSD_EIGEN * scale {
            return Err(invalid(format!("covariance is not positive semi-definite (eigenvalue {smallest:e})")));
        }
        Ok(Self { mean, cov })
    }

    /// Sample mean and unbiased covariance of one feature vector per row.
    pub fn from_features(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(invalid(format!("need at least two feature vectors, got {n}")));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(dim_err("feature vectors have differing lengths"));
        }
        let mean: Vec<f64> = (0..d).map(|j| stable_sum(rows.iter().map(|r| r[j])) / n as f64).collect();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let s = stable_sum(rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j]))) / (n - 1) as f64;
                cov[i * d + j] = s;
                cov[j * d + i] = s;
            }
        }
        Self::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &[f64] {
        &self.cov
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.cov)
    }
}

/// Square root of a symmetric PSD matrix, negative eigenvalues clamped to 0.
fn sym_sqrt(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `|mu_r - mu_g|^2 + tr(S_r + S_g - 2 sqrt(S_r^1/2 S_g S_r^1/2))`.
pub fn fid(real: &FeatureStats, gen: &FeatureStats) -> Result<f64> {
    if real.dim() != gen.dim() {
        return Err(dim_err(format!("feature dimensions differ: {} vs {}", real.dim(), gen.dim())));
    }
    let mean_term = stable_sum(real.mean.iter().zip(&gen.mean).map(|(a, b)| (a - b) * (a - b)));
    let (sr, sg) = (real.matrix(), gen.matrix());
    let root_r = sym_sqrt(sr.clone());
    let inner = &root_r * &sg * &root_r;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross = sym_sqrt(inner).trace();
    let value = mean_term + sr.trace() + sg.trace() - 2.0 * cross;
    let scale = 1.0f64.max(mean_term).max(sr.trace() + sg.trace());
    if value < -FID_NEGATIVE * scale {
        return Err(Error::Numeric(format!("FID evaluated to {value:e}")));
    }
    Ok(value.max(0.0))
}

/// Parses feature CSV: a `dim: d` header, then one comma-separated vector
/// per line. Blank lines are skipped.
pub fn parse_features_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty feature file".into()))?;
    let dim: usize = header
        .trim()
        .strip_prefix("dim:")
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| Error::Parse(format!("expected header `dim: d`, got {header:?}")))?;
    let mut rows = Vec::new();
    for (i, line) in lines {
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        if row.len() != dim {
            return Err(dim_err(format!("line {} has {} values, header says {dim}", i + 1, row.len())));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_features_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    parse_features_csv(&std::fs::read_to_string(path).map_err(io_err(path))?)
}

pub fn features_to_csv(rows: &[Vec<f64>]) -> String {
    let dim = rows.first().map_or(0, Vec::len);
    let mut out = format!("dim: {dim}\n");
    for r in rows {
        out.push_str(&r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}
