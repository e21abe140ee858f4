use serde::{Deserialize, Serialize};

use super::{same_dims, MetricError};
use crate::data::ImageCube;

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_TAPS: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

/// `10·log10(peak² / MSE)` over all pixels and bands; `+∞` when MSE is 0.
pub fn psnr(o: &ImageCube, x: &ImageCube, peak: f64) -> Result<f64, MetricError> {
    same_dims(o, x)?;
    if !(peak > 0.0) {
        return Err(MetricError::Undefined(format!(
            "peak must be positive, got {peak}"
        )));
    }
    let sse: f64 = o
        .data()
        .iter()
        .zip(x.data())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    let mse = sse / o.data().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamScore {
    pub degrees: f64,
    /// Pixels excluded because either spectrum has norm below 1e-12.
    pub excluded: usize,
}

/// Mean spectral angle `arccos(⟨o, x⟩ / (‖o‖‖x‖))` in degrees.
pub fn sam(o: &ImageCube, x: &ImageCube) -> Result<SamScore, MetricError> {
    same_dims(o, x)?;
    if o.bands() < 2 {
        return Err(MetricError::Undefined(
            "spectral angle needs at least 2 bands".into(),
        ));
    }
    let c = o.bands();
    let (mut sum, mut used, mut excluded) = (0.0f64, 0usize, 0usize);
    for (po, px) in o.data().chunks_exact(c).zip(x.data().chunks_exact(c)) {
        let no = po.iter().map(|&a| (a as f64).powi(2)).sum::<f64>().sqrt();
        let nx = px.iter().map(|&b| (b as f64).powi(2)).sum::<f64>().sqrt();
        if no < 1e-12 || nx < 1e-12 {
            excluded += 1;
            continue;
        }
        let (mut diff, mut plus) = (0.0f64, 0.0f64);
        for (&a, &b) in po.iter().zip(px) {
            let (u, v) = (a as f64 / no, b as f64 / nx);
            diff += (u - v).powi(2);
            plus += (u + v).powi(2);
        }
        // 2·atan2(|u − v|, |u + v|) stays accurate for near-parallel spectra.
        sum += 2.0 * diff.sqrt().atan2(plus.sqrt());
        used += 1;
    }
    if used == 0 {
        return Err(MetricError::Undefined(
            "every pixel has a zero spectrum".into(),
        ));
    }
    Ok(SamScore {
        degrees: (sum / used as f64).to_degrees(),
        excluded,
    })
}

/// `(100 / ratio) · sqrt(mean_b (RMSE_b / μ_b)²)` with `μ_b` the reference band mean.
pub fn ergas(o: &ImageCube, x: &ImageCube, ratio: usize) -> Result<f64, MetricError> {
    same_dims(o, x)?;
    if ratio == 0 {
        return Err(MetricError::Undefined("ratio must be positive".into()));
    }
    let c = o.bands();
    let n = (o.height() * o.width()) as f64;
    let mut sq = vec![0.0f64; c];
    for (po, px) in o.data().chunks_exact(c).zip(x.data().chunks_exact(c)) {
        for (b, (&a, &r)) in po.iter().zip(px).enumerate() {
            sq[b] += (a as f64 - r as f64).powi(2);
        }
    }
    let means = x.band_means();
    let mut acc = 0.0;
    for (b, (&s, &mu)) in sq.iter().zip(&means).enumerate() {
        if mu == 0.0 {
            return Err(MetricError::Undefined(format!(
                "reference band {b} has zero mean"
            )));
        }
        acc += s / n / (mu * mu);
    }
    Ok(100.0 / ratio as f64 * (acc / c as f64).sqrt())
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_TAPS / 2) as f64;
    let taps: Vec<f64> = (0..SSIM_TAPS)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Separable "valid" filtering of an `h×w` plane with `win` along both axes.
fn filter_valid(plane: &[f64], h: usize, w: usize, win: &[f64]) -> Vec<f64> {
    let k = win.len();
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|t| win[t] * plane[y * w + x + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|t| win[t] * rows[(y + t) * ow + x]).sum();
        }
    }
    out
}

/// Mean over bands of the mean SSIM map, with an 11-tap Gaussian window (σ = 1.5)
/// evaluated at every position where it fits entirely inside the image.
pub fn ssim(o: &ImageCube, x: &ImageCube, peak: f64) -> Result<f64, MetricError> {
    same_dims(o, x)?;
    let (h, w, c) = o.dims();
    if h < SSIM_TAPS || w < SSIM_TAPS {
        return Err(MetricError::Undefined(format!(
            "SSIM window {SSIM_TAPS} exceeds {h}x{w}"
        )));
    }
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let win = gaussian_window();
    let mut total = 0.0;
    for b in 0..c {
        let p: Vec<f64> = o.band(b).into_iter().map(f64::from).collect();
        let q: Vec<f64> = x.band(b).into_iter().map(f64::from).collect();
        let prod = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).collect::<Vec<_>>();
        let mu_p = filter_valid(&p, h, w, &win);
        let mu_q = filter_valid(&q, h, w, &win);
        let e_pp = filter_valid(&prod(&p, &p), h, w, &win);
        let e_qq = filter_valid(&prod(&q, &q), h, w, &win);
        let e_pq = filter_valid(&prod(&p, &q), h, w, &win);
        let mut band_sum = 0.0;
        for i in 0..mu_p.len() {
            let (mp, mq) = (mu_p[i], mu_q[i]);
            let vp = e_pp[i] - mp * mp;
            let vq = e_qq[i] - mq * mq;
            let cov = e_pq[i] - mp * mq;
            band_sum += ((2.0 * mp * mq + c1) * (2.0 * cov + c2))
                / ((mp * mp + mq * mq + c1) * (vp + vq + c2));
        }
        total += band_sum / mu_p.len() as f64;
    }
    Ok(total / c as f64)
}

/// Absolute error map: per-pixel mean over bands of `|O − X|`.
pub fn aem(o: &ImageCube, x: &ImageCube) -> Result<ImageCube, MetricError> {
    same_dims(o, x)?;
    let c = o.bands();
    let data = o
        .data()
        .chunks_exact(c)
        .zip(x.data().chunks_exact(c))
        .map(|(po, px)| {
            (po.iter()
                .zip(px)
                .map(|(&a, &b)| (a as f64 - b as f64).abs())
                .sum::<f64>()
                / c as f64) as f32
        })
        .collect();
    Ok(ImageCube::new(o.height(), o.width(), 1, data)?)
}
