//! Spatial-spectral double U-Net.
//!
//! A spatial U-Net over the guide image and a spectral U-Net over the
//! upsampled low-resolution cube run side by side. At each of five stages an
//! S2Block fuses the spatial feature into the spectral one; a 3×3 head maps
//! the final spectral feature to `C` bands and adds it to the upsampled input.

pub mod checkpoint;
pub mod layers;
mod net;
mod params;
pub mod s2block;

pub use checkpoint::{peek_dtype, Checkpoint, NamedTensor, RngState};
pub use net::{forward_graph, u2net_forward, Prepared};
pub use params::{layout, param_count, Bound, ParamInit, ParamSpec, ParamStore, ParamTensor};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Upsampler};
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("checkpoint format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Two branches fused by S2Blocks.
    #[default]
    Full,
    /// One shared branch over the concatenated inputs.
    V1,
    /// S2Blocks replaced by concatenation and an affine width reduction.
    V2,
    /// Spatial self-correlation only.
    V3,
    /// Spectral self-correlation only.
    V4,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::V1,
        Variant::V2,
        Variant::V3,
        Variant::V4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::V1 => "v1",
            Variant::V2 => "v2",
            Variant::V3 => "v3",
            Variant::V4 => "v4",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Guide channels `c`: 1 for panchromatic, 3 for RGB.
    pub guide_channels: usize,
    /// Spectral bands `C` of the low-resolution input.
    pub bands: usize,
    /// Base feature width `S`; stages run at `S`, `2S`, `4S`, `2S`, `S`.
    pub width: usize,
    /// Per-head width `S′`; stage `k` has `S_k / S′` heads.
    pub head_width: usize,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default = "default_slope")]
    pub lrelu_slope: f64,
    #[serde(default = "default_one")]
    pub resblocks_per_stage: usize,
    /// Kernel extent of the depthwise widening convolution in each encoder step.
    #[serde(default = "default_depthwise")]
    pub depthwise_kernel: usize,
    #[serde(default)]
    pub upsampler: Upsampler,
    #[serde(default)]
    pub seed: u64,
    /// Zero-initializes the head so the untrained network returns the upsampled input.
    #[serde(default)]
    pub zero_head: bool,
}

fn default_slope() -> f64 {
    0.2
}

fn default_one() -> usize {
    1
}

fn default_depthwise() -> usize {
    3
}

impl ModelConfig {
    pub fn new(guide_channels: usize, bands: usize, width: usize, head_width: usize) -> Self {
        ModelConfig {
            guide_channels,
            bands,
            width,
            head_width,
            variant: Variant::Full,
            lrelu_slope: default_slope(),
            resblocks_per_stage: 1,
            depthwise_kernel: default_depthwise(),
            upsampler: Upsampler::Bicubic,
            seed: 0,
            zero_head: false,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.guide_channels == 0 || self.bands == 0 || self.width == 0 || self.head_width == 0 {
            return err(format!("channel counts and widths must be >= 1: {self:?}"));
        }
        if self.width % self.head_width != 0 {
            return err(format!(
                "width {} is not divisible by head width {}",
                self.width, self.head_width
            ));
        }
        if !(self.lrelu_slope > 0.0 && self.lrelu_slope < 1.0) {
            return err(format!("lrelu slope {} outside (0, 1)", self.lrelu_slope));
        }
        if self.resblocks_per_stage == 0 {
            return err("resblocks_per_stage must be >= 1".into());
        }
        if self.depthwise_kernel % 2 == 0 {
            return err(format!(
                "depthwise kernel {} must be odd",
                self.depthwise_kernel
            ));
        }
        Ok(())
    }

    /// Feature width of stage `k` in `1..=5`.
    pub fn stage_width(&self, k: usize) -> usize {
        match k {
            1 | 5 => self.width,
            2 | 4 => 2 * self.width,
            3 => 4 * self.width,
            _ => panic!("stage {k} outside 1..=5"),
        }
    }

    pub fn heads(&self, k: usize) -> usize {
        self.stage_width(k) / self.head_width
    }
}
