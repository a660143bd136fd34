//! Multi-modal condition generation: an edge map, a depth map and a
//! structured prompt (plus its embedding) for one image.

pub mod depth;
pub mod edge;
pub mod embed;
pub mod prompt;

use serde::{Deserialize, Serialize};

pub use depth::{BlurDepth, DepthProvider};
pub use edge::{adaptive_canny, otsu_threshold, EdgeConfig};
pub use embed::text_embed_stub;
pub use prompt::{
    build_prompt, classify_scale, locate_cell, GridCell, PromptConfig, PromptMode, PromptSpec, ScaleClass, ScaleThresholds,
    TemplateLibrary,
};

use crate::defect::DefectInstance;
use crate::error::Result;
use crate::image::GrayImage;
use crate::tensor::{concat_channels, Tensor};

/// The conditions extracted for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSet {
    /// Binary edge map, values 0 or 255.
    pub edge: GrayImage,
    /// `(1, 1, H, W)` depth in `[0, 1]`.
    pub depth: Tensor,
    pub prompt: String,
    /// `(dim)` unit vector.
    pub text_embedding: Tensor,
}

impl ConditionSet {
    /// Stacks the spatial conditions into a `(1, 3, H, W)` map:
    /// edges scaled to `[0, 1]`, depth, and their product.
    pub fn condition_map(&self) -> Result<Tensor> {
        let edge = self.edge.to_tensor(255.0);
        let both = edge.mul(&self.depth)?;
        concat_channels(&[&edge, &self.depth, &both])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionConfig {
    pub edge: EdgeConfig,
    pub prompt: PromptConfig,
    pub embed_dim: usize,
    pub embed_seed: u64,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        Self { edge: EdgeConfig::default(), prompt: PromptConfig::default(), embed_dim: 64, embed_seed: 0 }
    }
}

/// Runs the three branches. Edge and depth extraction run on scoped
/// threads alongside the text branch; the result is identical to calling
/// each branch in turn.
pub fn generate_conditions(
    img: &GrayImage,
    instances: &[DefectInstance],
    cfg: &ConditionConfig,
    templates: &TemplateLibrary,
    depth: &dyn DepthProvider,
) -> Result<ConditionSet> {
    let (edge, depth_map, text) = std::thread::scope(|s| {
        let edge = s.spawn(|| adaptive_canny(img, &cfg.edge));
        let depth_map = s.spawn(|| depth.estimate(img));
        let text = build_prompt(instances, img.width(), img.height(), &cfg.prompt, templates)
            .and_then(|p| text_embed_stub(&p, cfg.embed_dim, cfg.embed_seed).map(|e| (p, e)));
        (edge.join().expect("edge branch panicked"), depth_map.join().expect("depth branch panicked"), text)
    });
    let depth_map = depth_map?;
    depth::check_depth(img, &depth_map)?;
    let (prompt, text_embedding) = text?;
    Ok(ConditionSet { edge: edge?, depth: depth_map, prompt, text_embedding })
}
