//! Numerical tolerances shared by the kernels, the invariant sweep and the
//! test suites. Everything that compares floats against a threshold reads it
//! from here.

/// Added to the variance before the square root in group normalization.
pub const GROUP_NORM_EPS: f64 = 1e-10;

/// Added to the denominator of the relative error in `grad_check`.
pub const GRAD_CHECK_DENOM_EPS: f64 = 1e-12;

/// Softmax rows must sum to one within this bound.
pub const SOFTMAX_SUM: f64 = 1e-9;

/// Per-group mean after normalization.
pub const GROUP_NORM_MEAN: f64 = 1e-6;

/// Per-group variance after normalization, measured against 1.
pub const GROUP_NORM_VAR: f64 = 1e-4;

/// Exact-inversion DDIM round trip, single step.
pub const DDIM_SINGLE_STEP: f64 = 1e-9;

/// Exact-inversion DDIM round trip over a skip chain.
pub const DDIM_CHAIN: f64 = 1e-7;

/// Composed-oracle comparisons for the detector blocks.
pub const BLOCK_ORACLE: f64 = 1e-10;

/// Relative error accepted from finite-difference gradient checks.
pub const GRAD_CHECK_REL: f64 = 1e-4;

/// Smallest eigenvalue allowed for a covariance matrix to count as PSD.
pub const PSD_EIGEN: f64 = 1e-8;

/// Relative asymmetry allowed in a covariance matrix.
pub const SYMMETRY: f64 = 1e-9;

/// FID values down to this negative bound are treated as rounding noise.
pub const FID_NEGATIVE: f64 = 1e-6;

/// Gradient magnitudes at or below this value never become edge pixels.
pub const EDGE_MAGNITUDE_FLOOR: f64 = 1e-9;

/// Discretization bound between 101-point and all-point AP integration.
pub const AP_DISCRETIZATION: f64 = 0.01;

/// Channel vectors are divided by `norm + LPIPS_NORM_EPS` before comparison.
pub const LPIPS_NORM_EPS: f64 = 1e-10;
