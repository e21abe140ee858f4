//! Synthetic sample generation, reduced-resolution simulation, resampling,
//! patching, and raster I/O.
//!
//! Every cube is `H×W×bands` with values in `[0, 1]`. A training sample is a
//! triple of guide `A` (`H×W×c`), low-resolution `B` (`H/4×W/4×C`), and
//! reference `X` (`H×W×C`).

mod cube;
pub mod degrade;
pub mod fcube;
pub mod manifest;
pub mod patches;
pub mod png;
pub mod resample;
pub mod synth;

pub use cube::ImageCube;
pub use degrade::{blur_decimate, degrade_to_pair, DegradeConfig, Guide, RATIO};
pub use fcube::{read_cube, write_cube};
pub use manifest::{DatasetManifest, ManifestEntry, Split};
pub use patches::extract_patches;
pub use resample::{upsample_lowres, Upsampler};
pub use synth::synth_scene;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("config error: {0}")]
    Config(String),
    #[error("value {value} at index {index} outside [0, 1]")]
    Range { index: usize, value: f64 },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Guide, low-resolution input, and (for reduced-resolution data) reference.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTriple {
    pub id: String,
    pub a: ImageCube,
    pub b: ImageCube,
    /// Absent for full-resolution samples, where no reference exists.
    pub x: Option<ImageCube>,
}

impl SampleTriple {
    pub fn new(
        id: impl Into<String>,
        a: ImageCube,
        b: ImageCube,
        x: Option<ImageCube>,
    ) -> Result<Self, DataError> {
        let (h, w, _) = a.dims();
        if h % RATIO != 0 || w % RATIO != 0 {
            return Err(DataError::Shape(format!(
                "guide {h}x{w} not divisible by {RATIO}"
            )));
        }
        if b.height() * RATIO != h || b.width() * RATIO != w {
            return Err(DataError::Shape(format!(
                "low-resolution {}x{} does not match guide {h}x{w} at ratio {RATIO}",
                b.height(),
                b.width()
            )));
        }
        if let Some(x) = &x {
            if x.height() != h || x.width() != w || x.bands() != b.bands() {
                return Err(DataError::Shape(format!(
                    "reference {:?} inconsistent with guide {h}x{w} and {} bands",
                    x.dims(),
                    b.bands()
                )));
            }
        }
        Ok(SampleTriple {
            id: id.into(),
            a,
            b,
            x,
        })
    }

    /// Synthesizes a scene and simulates its observation pair.
    pub fn synthesize(
        id: impl Into<String>,
        size: usize,
        bands: usize,
        degrade: &DegradeConfig,
        seed: u64,
    ) -> Result<Self, DataError> {
        let x = synth_scene(size, size, bands, seed)?;
        let (a, b) = degrade_to_pair(&x, degrade, seed.wrapping_add(1))?;
        Self::new(id, a, b, Some(x))
    }
}
