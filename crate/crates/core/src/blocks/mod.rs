//! Detection-side blocks: shift-wise convolution, the inverted residual
//! shift attention block, the gated cross-level fusion block, and a small
//! backbone and neck assembled from them.

pub mod backbone;
pub mod check;
pub mod dpca;
pub mod irsa;
pub mod shift;

pub use backbone::{backbone_forward, neck_fuse, BackboneConfig, BackboneParams, NeckParams, PyramidFeatures};
pub use check::{run_checks, CheckResult};
pub use dpca::{clcf_fuse, dpca_gate, ClcfParams, DpcaConfig, DpcaParams};
pub use irsa::{irsa_forward, IrsaConfig, IrsaParams};
pub use shift::{shift_wise_conv, Direction, ShiftSpec};
