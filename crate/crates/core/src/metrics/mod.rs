//! Fusion quality indexes.
//!
//! Reduced resolution (reference available): PSNR, SAM, ERGAS, SSIM, Q2ⁿ.
//! Full resolution (no reference): D_λ, D_s, QNR. Plus absolute error maps.
//!
//! All indexes are computed in f64 on cubes normalized to `[0, 1]`.
//!
//! Degenerate blocks (zero variance or zero mean energy, where the quality
//! index is 0/0) are skipped and counted rather than assigned a value.

mod full;
mod quality;
mod reduced;
mod report;

pub use full::{qnr_suite, FullScores, QNR_BLOCK};
pub use quality::{cd_mul, q2n, uqi, BlockQuality, Q2N_BLOCK};
pub use reduced::{aem, ergas, psnr, sam, ssim, SamScore, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_TAPS};
pub use report::{Aggregate, FullResReport, ReducedResReport, ReducedScores, Report, ScoreRow};

use thiserror::Error;

use crate::data::ImageCube;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Peak signal value for PSNR and SSIM in normalized units. Ingestion maps the
/// largest sensor code to 1, so this is 1 for every `bit_depth_origin`.
pub fn peak_value(_cube: &ImageCube) -> f64 {
    1.0
}

fn same_dims(o: &ImageCube, x: &ImageCube) -> Result<(), MetricError> {
    if o.dims() != x.dims() {
        return Err(MetricError::Shape(format!(
            "{:?} vs {:?}",
            o.dims(),
            x.dims()
        )));
    }
    Ok(())
}
