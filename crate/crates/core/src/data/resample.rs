//! Separable resampling with half-sample symmetric borders.
//!
//! Grids are pixel-center aligned: high-resolution pixel `u` sits at
//! low-resolution coordinate `(u + 0.5) / ratio - 0.5`.

use serde::{Deserialize, Serialize};

use super::{DataError, ImageCube};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Upsampler {
    #[default]
    Bicubic,
    Bilinear,
    Nearest,
}

/// Reflects an out-of-range index: `-1 -> 0`, `n -> n - 1`.
pub fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn cubic_weight(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

/// Taps `(source index, weight)` for each output position along one axis.
pub type Taps = Vec<Vec<(usize, f64)>>;

fn upsample_taps(n_in: usize, ratio: usize, method: Upsampler) -> Taps {
    (0..n_in * ratio)
        .map(|u| {
            let src = (u as f64 + 0.5) / ratio as f64 - 0.5;
            match method {
                Upsampler::Nearest => vec![(reflect(src.round() as isize, n_in), 1.0)],
                Upsampler::Bilinear => {
                    let i0 = src.floor();
                    let t = src - i0;
                    let i0 = i0 as isize;
                    vec![(reflect(i0, n_in), 1.0 - t), (reflect(i0 + 1, n_in), t)]
                }
                Upsampler::Bicubic => {
                    let i0 = src.floor();
                    let t = src - i0;
                    let i0 = i0 as isize;
                    (-1..=2)
                        .map(|d| (reflect(i0 + d, n_in), cubic_weight(t - d as f64)))
                        .collect()
                }
            }
        })
        .collect()
}

/// Applies per-axis taps: rows along height, cols along width.
pub fn separable(src: &ImageCube, rows: &Taps, cols: &Taps) -> Vec<f64> {
    let (h, _, c) = src.dims();
    let (oh, ow) = (rows.len(), cols.len());
    // width pass
    let mut tmp = vec![0.0f64; h * ow * c];
    for y in 0..h {
        for (ox, taps) in cols.iter().enumerate() {
            let dst = &mut tmp[(y * ow + ox) * c..(y * ow + ox + 1) * c];
            for &(ix, wt) in taps {
                for (d, &v) in dst.iter_mut().zip(src.pixel(y, ix)) {
                    *d += wt * v as f64;
                }
            }
        }
    }
    let mut out = vec![0.0f64; oh * ow * c];
    for (oy, taps) in rows.iter().enumerate() {
        for &(iy, wt) in taps {
            let s = &tmp[iy * ow * c..(iy + 1) * ow * c];
            for (d, &v) in out[oy * ow * c..(oy + 1) * ow * c].iter_mut().zip(s) {
                *d += wt * v;
            }
        }
    }
    out
}

/// Interpolates a low-resolution cube onto the `ratio`-times finer grid.
pub fn upsample_lowres(
    b: &ImageCube,
    ratio: usize,
    method: Upsampler,
) -> Result<ImageCube, DataError> {
    if ratio == 0 {
        return Err(DataError::Config(
            "upsampling ratio must be positive".into(),
        ));
    }
    let rows = upsample_taps(b.height(), ratio, method);
    let cols = upsample_taps(b.width(), ratio, method);
    let out = separable(b, &rows, &cols);
    let data = out.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect();
    let mut cube = ImageCube::new(b.height() * ratio, b.width() * ratio, b.bands(), data)?;
    cube.bit_depth_origin = b.bit_depth_origin;
    cube.band_labels = b.band_labels.clone();
    Ok(cube)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_is_half_sample_symmetric() {
        assert_eq!(reflect(-1, 4), 0);
        assert_eq!(reflect(-2, 4), 1);
        assert_eq!(reflect(4, 4), 3);
        assert_eq!(reflect(5, 4), 2);
        assert_eq!(reflect(-7, 3), 0);
        assert_eq!(reflect(3, 1), 0);
    }

    #[test]
    fn cubic_weights_partition_unity() {
        for t in [0.0, 0.125, 0.375, 0.5, 0.875] {
            let s: f64 = (-1..=2).map(|d| cubic_weight(t - d as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
