//! Universal image quality index, scalar and hypercomplex.
//!
//! Both are evaluated on non-overlapping square blocks laid on a grid with the
//! given shift from the top-left corner; blocks that do not fit are dropped.
//! A block whose index is 0/0 (zero variance in both images, or zero mean
//! energy in both) is skipped and counted.

use serde::{Deserialize, Serialize};

use super::{same_dims, MetricError};
use crate::data::ImageCube;

pub const Q2N_BLOCK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockQuality {
    /// Mean over evaluated blocks.
    pub value: f64,
    pub blocks: usize,
    pub skipped: usize,
}

fn block_origins(
    h: usize,
    w: usize,
    block: usize,
    shift: usize,
) -> Result<Vec<(usize, usize)>, MetricError> {
    if block == 0 || shift == 0 {
        return Err(MetricError::Undefined(
            "block and shift must be positive".into(),
        ));
    }
    if block > h || block > w {
        return Err(MetricError::Undefined(format!(
            "block {block} exceeds {h}x{w}"
        )));
    }
    let ys = (0..=h - block).step_by(shift);
    Ok(ys
        .flat_map(|y| (0..=w - block).step_by(shift).map(move |x| (y, x)))
        .collect())
}

fn finish(sum: f64, blocks: usize, skipped: usize) -> Result<BlockQuality, MetricError> {
    let used = blocks - skipped;
    if used == 0 {
        return Err(MetricError::Undefined(format!(
            "all {blocks} blocks are degenerate"
        )));
    }
    Ok(BlockQuality {
        value: sum / used as f64,
        blocks,
        skipped,
    })
}

/// Scalar index `4·σpq·μp·μq / ((σp² + σq²)(μp² + μq²))` of two `h×w` planes,
/// averaged over `block×block` tiles.
pub fn uqi(
    p: &[f64],
    q: &[f64],
    h: usize,
    w: usize,
    block: usize,
) -> Result<BlockQuality, MetricError> {
    if p.len() != h * w || q.len() != h * w {
        return Err(MetricError::Shape(format!(
            "planes of {} and {} values for {h}x{w}",
            p.len(),
            q.len()
        )));
    }
    let origins = block_origins(h, w, block, block)?;
    let n = (block * block) as f64;
    let (mut sum, mut skipped) = (0.0, 0);
    for &(y0, x0) in &origins {
        let idx = || (y0..y0 + block).flat_map(move |y| (x0..x0 + block).map(move |x| y * w + x));
        let mp = idx().map(|i| p[i]).sum::<f64>() / n;
        let mq = idx().map(|i| q[i]).sum::<f64>() / n;
        let (mut vp, mut vq, mut cov) = (0.0, 0.0, 0.0);
        for i in idx() {
            let (dp, dq) = (p[i] - mp, q[i] - mq);
            vp += dp * dp;
            vq += dq * dq;
            cov += dp * dq;
        }
        let den = (vp + vq) * (mp * mp + mq * mq);
        if den == 0.0 {
            skipped += 1;
            continue;
        }
        sum += 4.0 * cov * mp * mq / den;
    }
    finish(sum, origins.len(), skipped)
}

fn conj(a: &[f64]) -> Vec<f64> {
    let mut out = a.to_vec();
    out.iter_mut().skip(1).for_each(|v| *v = -*v);
    out
}

/// Cayley–Dickson product `(a, b)(c, d) = (ac − d̄b, da + bc̄)` on power-of-two
/// component vectors. Length 4 gives Hamilton quaternions with basis `1, i, j, k`.
pub fn cd_mul(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    debug_assert_eq!(n, y.len());
    if n == 1 {
        return vec![x[0] * y[0]];
    }
    let m = n / 2;
    let (a, b) = x.split_at(m);
    let (c, d) = y.split_at(m);
    let ac = cd_mul(a, c);
    let db = cd_mul(&conj(d), b);
    let da = cd_mul(d, a);
    let bc = cd_mul(b, &conj(c));
    let mut out: Vec<f64> = ac.iter().zip(&db).map(|(u, v)| u - v).collect();
    out.extend(da.iter().zip(&bc).map(|(u, v)| u + v));
    out
}

fn modulus(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Hypercomplex quality index.
///
/// Each pixel's band vector is read as a hypercomplex number, zero-padded to the
/// next power of two components. Per block,
/// `Q = 4·|σ_ox|·|μ_o|·|μ_x| / ((σ_o² + σ_x²)(|μ_o|² + |μ_x|²))` with
/// `σ_ox = E[(o − μ_o)·conj(x − μ_x)]`. With one band this is `|UQI|`.
pub fn q2n(
    o: &ImageCube,
    x: &ImageCube,
    block: usize,
    shift: usize,
) -> Result<BlockQuality, MetricError> {
    same_dims(o, x)?;
    let (h, w, c) = o.dims();
    let d = c.next_power_of_two();
    let origins = block_origins(h, w, block, shift)?;
    let n = (block * block) as f64;
    let pad = |src: &[f32]| -> Vec<f64> {
        let mut v: Vec<f64> = src.iter().map(|&s| s as f64).collect();
        v.resize(d, 0.0);
        v
    };
    let (mut sum, mut skipped) = (0.0, 0);
    for &(y0, x0) in &origins {
        let pixels: Vec<(Vec<f64>, Vec<f64>)> = (y0..y0 + block)
            .flat_map(|y| (x0..x0 + block).map(move |xx| (y, xx)))
            .map(|(y, xx)| (pad(o.pixel(y, xx)), pad(x.pixel(y, xx))))
            .collect();
        let mut mo = vec![0.0; d];
        let mut mx = vec![0.0; d];
        for (po, px) in &pixels {
            mo.iter_mut().zip(po).for_each(|(m, v)| *m += v / n);
            mx.iter_mut().zip(px).for_each(|(m, v)| *m += v / n);
        }
        let (mut vo, mut vx) = (0.0, 0.0);
        let mut cov = vec![0.0; d];
        for (po, px) in &pixels {
            let co: Vec<f64> = po.iter().zip(&mo).map(|(v, m)| v - m).collect();
            let cx: Vec<f64> = px.iter().zip(&mx).map(|(v, m)| v - m).collect();
            vo += co.iter().map(|v| v * v).sum::<f64>() / n;
            vx += cx.iter().map(|v| v * v).sum::<f64>() / n;
            let prod = cd_mul(&co, &conj(&cx));
            cov.iter_mut().zip(&prod).for_each(|(s, p)| *s += p / n);
        }
        let (ao, ax) = (modulus(&mo), modulus(&mx));
        let den = (vo + vx) * (ao * ao + ax * ax);
        if den == 0.0 {
            skipped += 1;
            continue;
        }
        sum += 4.0 * modulus(&cov) * ao * ax / den;
    }
    finish(sum, origins.len(), skipped)
}
