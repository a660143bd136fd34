pub mod blocks;
pub mod condgen;
pub mod config;
pub mod dataset;
pub mod defect;
pub mod diffusion;
pub mod error;
pub mod image;
pub mod init;
pub mod metrics;
pub mod ops;
pub mod reference;
pub mod tensor;
pub mod tolerance;

pub use error::{Error, Result};
pub use tensor::Tensor;
