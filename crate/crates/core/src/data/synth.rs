//! Seeded synthetic multi-band scenes standing in for real imagery.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

use super::{DataError, ImageCube};

pub const MIN_EXTENT: usize = 16;

struct Region {
    y: f64,
    x: f64,
    spectrum: Vec<f64>,
}

struct Mode {
    fy: f64,
    fx: f64,
    phase: f64,
    amp: Vec<f64>,
}

/// Piecewise-constant Voronoi regions with smooth spectra, plus a few
/// low-frequency cosine modes and a per-band gain, clipped to `[0, 1]`.
pub fn synth_scene(
    height: usize,
    width: usize,
    bands: usize,
    seed: u64,
) -> Result<ImageCube, DataError> {
    if height < MIN_EXTENT || width < MIN_EXTENT || bands == 0 {
        return Err(DataError::Config(format!(
            "scene extents must be >= {MIN_EXTENT} with at least one band, got {height}x{width}x{bands}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band_pos = |b: usize| {
        if bands == 1 {
            0.5
        } else {
            b as f64 / (bands - 1) as f64
        }
    };

    let n_regions = rng.gen_range(5..=10);
    let regions: Vec<Region> = (0..n_regions)
        .map(|_| {
            let base = rng.gen_range(0.2..0.7);
            let slope = rng.gen_range(-0.25..0.25);
            let bump = rng.gen_range(-0.15..0.15);
            let center = rng.gen_range(0.0..1.0);
            Region {
                y: rng.gen_range(0.0..height as f64),
                x: rng.gen_range(0.0..width as f64),
                spectrum: (0..bands)
                    .map(|b| {
                        let p = band_pos(b);
                        base + slope * (p - 0.5) + bump * (-((p - center) / 0.2).powi(2)).exp()
                    })
                    .collect(),
            }
        })
        .collect();

    let modes: Vec<Mode> = (0..4)
        .map(|_| {
            let a0 = rng.gen_range(0.02..0.06);
            let tilt = rng.gen_range(-0.5..0.5);
            Mode {
                fy: rng.gen_range(0.5..3.0) / height as f64,
                fx: rng.gen_range(0.5..3.0) / width as f64,
                phase: rng.gen_range(0.0..TAU),
                amp: (0..bands)
                    .map(|b| a0 * (1.0 + tilt * (band_pos(b) - 0.5)))
                    .collect(),
            }
        })
        .collect();

    let gain: Vec<f64> = (0..bands).map(|_| rng.gen_range(0.9..1.1)).collect();

    let mut data = Vec::with_capacity(height * width * bands);
    for y in 0..height {
        for x in 0..width {
            let (yf, xf) = (y as f64 + 0.5, x as f64 + 0.5);
            let region = regions
                .iter()
                .min_by(|a, b| {
                    let da = (a.y - yf).powi(2) + (a.x - xf).powi(2);
                    let db = (b.y - yf).powi(2) + (b.x - xf).powi(2);
                    da.total_cmp(&db)
                })
                .expect("at least one region");
            let waves: Vec<f64> = modes
                .iter()
                .map(|m| (TAU * (m.fy * yf + m.fx * xf) + m.phase).cos())
                .collect();
            for b in 0..bands {
                let field: f64 = modes.iter().zip(&waves).map(|(m, w)| m.amp[b] * w).sum();
                let v = (region.spectrum[b] + field) * gain[b];
                data.push(v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    ImageCube::new(height, width, bands, data)
}
