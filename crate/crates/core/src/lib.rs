//! Spatial-spectral double U-Net image fusion: tensor engine, model, training,
//! synthetic data, and quality metrics.

pub mod data;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;
pub mod verify;
