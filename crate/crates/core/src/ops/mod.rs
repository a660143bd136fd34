//! Deterministic forward kernels shared by every block in the crate.

pub mod activation;
pub mod attention;
pub mod conv;
pub mod gradcheck;
pub mod layout;
pub mod linear;
pub mod norm;
pub mod resample;

pub use activation::{relu, relu_t, sigmoid, sigmoid_t, silu, silu_t};
pub use attention::{scaled_dot_attention, softmax, spatial_attention, AttentionParams, LogitScaling};
pub use conv::{conv2d, ConvParams};
pub use gradcheck::grad_check;
pub use linear::Linear;
pub use layout::{channel_shuffle, depth_to_space, shuffle_permutation, space_to_depth};
pub use norm::{group_norm, group_norm_vjp};
pub use resample::resize_bilinear;
