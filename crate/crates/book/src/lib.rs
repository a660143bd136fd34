//! Compiles the guide's Rust listings as doctests, one module per chapter,
//! so a failing listing names the chapter it came from.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/conditions.md")]
pub mod conditions {}
#[doc = include_str!("../../../book/src/diffusion.md")]
pub mod diffusion {}
#[doc = include_str!("../../../book/src/blocks.md")]
pub mod blocks {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/dataset.md")]
pub mod dataset {}
