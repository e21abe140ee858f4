//! Reduced-resolution simulation: guide-image synthesis plus Gaussian blur and
//! decimation of the reference cube.
//!
//! The blur is a stand-in for sensor MTF filters. Decimated samples are taken at
//! the centers of `ratio×ratio` cells, i.e. the Gaussian for low-resolution
//! pixel `i` is centered at high-resolution coordinate `ratio·i + (ratio−1)/2`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::resample::{reflect, separable, Taps};
use super::{DataError, ImageCube};

pub const DEFAULT_BLUR_SIGMA: f64 = 1.7;
pub const RATIO: usize = 4;

/// How the high-resolution guide image is formed from the reference bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guide {
    /// Single panchromatic band: per-pixel weighted band average.
    Pan(Vec<f64>),
    /// Uniform panchromatic weights over all bands.
    UniformPan,
    /// Three-band RGB-like image from fixed Gaussian spectral responses.
    Rgb,
}

impl Guide {
    pub fn channels(&self) -> usize {
        match self {
            Guide::Pan(_) | Guide::UniformPan => 1,
            Guide::Rgb => 3,
        }
    }

    /// Per-channel band weights for a cube with `bands` bands.
    pub fn weights(&self, bands: usize) -> Result<Vec<Vec<f64>>, DataError> {
        match self {
            Guide::UniformPan => Ok(vec![vec![1.0 / bands as f64; bands]]),
            Guide::Pan(w) => {
                if w.len() != bands {
                    return Err(DataError::Config(format!(
                        "{} pan weights for {bands} bands",
                        w.len()
                    )));
                }
                if w.iter().any(|&v| !(v >= 0.0)) {
                    return Err(DataError::Config("pan weights must be non-negative".into()));
                }
                let s: f64 = w.iter().sum();
                if (s - 1.0).abs() > 1e-6 {
                    return Err(DataError::Config(format!(
                        "pan weights sum to {s}, expected 1"
                    )));
                }
                Ok(vec![w.clone()])
            }
            Guide::Rgb => Ok(rgb_responses(bands)),
        }
    }
}

/// Gaussian responses centered at relative band positions 0.8 (R), 0.5 (G), 0.2 (B).
pub fn rgb_responses(bands: usize) -> Vec<Vec<f64>> {
    [0.8, 0.5, 0.2]
        .iter()
        .map(|&center| {
            let raw: Vec<f64> = (0..bands)
                .map(|b| {
                    let pos = if bands == 1 {
                        0.5
                    } else {
                        b as f64 / (bands - 1) as f64
                    };
                    (-0.5 * ((pos - center) / 0.15).powi(2)).exp()
                })
                .collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradeConfig {
    pub guide: Guide,
    #[serde(default = "default_sigma")]
    pub blur_sigma: f64,
    /// Standard deviation of additive Gaussian noise on both outputs; 0 disables.
    #[serde(default)]
    pub noise_sigma: f64,
}

fn default_sigma() -> f64 {
    DEFAULT_BLUR_SIGMA
}

impl Default for DegradeConfig {
    fn default() -> Self {
        DegradeConfig {
            guide: Guide::UniformPan,
            blur_sigma: DEFAULT_BLUR_SIGMA,
            noise_sigma: 0.0,
        }
    }
}

fn gaussian_taps(n_in: usize, ratio: usize, sigma: f64) -> Taps {
    let radius = (3.0 * sigma).ceil() as isize + 1;
    (0..n_in / ratio)
        .map(|i| {
            let center = (ratio * i) as f64 + (ratio as f64 - 1.0) / 2.0;
            let lo = center.floor() as isize - radius;
            let hi = center.ceil() as isize + radius;
            let mut taps: Vec<(usize, f64)> = (lo..=hi)
                .map(|t| {
                    let d = t as f64 - center;
                    (reflect(t, n_in), (-d * d / (2.0 * sigma * sigma)).exp())
                })
                .collect();
            let s: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= s);
            taps
        })
        .collect()
}

/// Gaussian blur followed by `ratio`× decimation.
pub fn blur_decimate(x: &ImageCube, sigma: f64, ratio: usize) -> Result<ImageCube, DataError> {
    if !(sigma > 0.0) {
        return Err(DataError::Config(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    if ratio == 0 || x.height() % ratio != 0 || x.width() % ratio != 0 {
        return Err(DataError::Shape(format!(
            "{}x{} is not divisible by ratio {ratio}",
            x.height(),
            x.width()
        )));
    }
    let rows = gaussian_taps(x.height(), ratio, sigma);
    let cols = gaussian_taps(x.width(), ratio, sigma);
    let data = separable(x, &rows, &cols)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0) as f32)
        .collect();
    let mut out = ImageCube::new(x.height() / ratio, x.width() / ratio, x.bands(), data)?;
    out.bit_depth_origin = x.bit_depth_origin;
    out.band_labels = x.band_labels.clone();
    Ok(out)
}

/// Per-pixel linear band mixing, one output channel per weight vector.
pub fn mix_bands(x: &ImageCube, weights: &[Vec<f64>]) -> Result<ImageCube, DataError> {
    let mut data = Vec::with_capacity(x.height() * x.width() * weights.len());
    for px in x.data().chunks_exact(x.bands()) {
        for w in weights {
            let v: f64 = px.iter().zip(w).map(|(&p, &wt)| p as f64 * wt).sum();
            data.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    let mut out = ImageCube::new(x.height(), x.width(), weights.len(), data)?;
    out.bit_depth_origin = x.bit_depth_origin;
    Ok(out)
}

fn add_noise(cube: &ImageCube, sigma: f64, rng: &mut ChaCha8Rng) -> Result<ImageCube, DataError> {
    let normal = Normal::new(0.0, sigma).map_err(|e| DataError::Config(e.to_string()))?;
    let data = cube
        .data()
        .iter()
        .map(|&v| (v as f64 + normal.sample(rng)).clamp(0.0, 1.0) as f32)
        .collect();
    let (h, w, c) = cube.dims();
    Ok(ImageCube::new(h, w, c, data)?.with_bit_depth(cube.bit_depth_origin))
}

/// Simulates the `(guide, low-resolution)` pair observed from reference `x`.
pub fn degrade_to_pair(
    x: &ImageCube,
    cfg: &DegradeConfig,
    seed: u64,
) -> Result<(ImageCube, ImageCube), DataError> {
    if x.height() % RATIO != 0 || x.width() % RATIO != 0 {
        return Err(DataError::Shape(format!(
            "reference {}x{} must be divisible by {RATIO}",
            x.height(),
            x.width()
        )));
    }
    if cfg.noise_sigma < 0.0 {
        return Err(DataError::Config("noise sigma must be >= 0".into()));
    }
    let weights = cfg.guide.weights(x.bands())?;
    let mut a = mix_bands(x, &weights)?;
    let mut b = blur_decimate(x, cfg.blur_sigma, RATIO)?;
    if cfg.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        a = add_noise(&a, cfg.noise_sigma, &mut rng)?;
        b = add_noise(&b, cfg.noise_sigma, &mut rng)?;
    }
    Ok((a, b))
}
