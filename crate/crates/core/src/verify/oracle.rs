//! Brute-force references written as plain loops over `get`, sharing no kernels
//! with the production metrics or attention code.

use crate::data::{blur_decimate, degrade::DEFAULT_BLUR_SIGMA, ImageCube};

pub fn psnr(o: &ImageCube, x: &ImageCube) -> f64 {
    let (h, w, c) = o.dims();
    let mut sse = 0.0;
    for y in 0..h {
        for xx in 0..w {
            for b in 0..c {
                let d = o.get(y, xx, b) as f64 - x.get(y, xx, b) as f64;
                sse += d * d;
            }
        }
    }
    10.0 * (1.0 / (sse / (h * w * c) as f64)).log10()
}

pub fn sam(o: &ImageCube, x: &ImageCube) -> f64 {
    let (h, w, c) = o.dims();
    let mut total = 0.0;
    for y in 0..h {
        for xx in 0..w {
            let (mut dot, mut a2, mut b2) = (0.0, 0.0, 0.0);
            for b in 0..c {
                let (p, q) = (o.get(y, xx, b) as f64, x.get(y, xx, b) as f64);
                dot += p * q;
                a2 += p * p;
                b2 += q * q;
            }
            total += (dot / (a2.sqrt() * b2.sqrt())).clamp(-1.0, 1.0).acos();
        }
    }
    (total / (h * w) as f64).to_degrees()
}

pub fn ergas(o: &ImageCube, x: &ImageCube, ratio: f64) -> f64 {
    let (h, w, c) = o.dims();
    let n = (h * w) as f64;
    let mut acc = 0.0;
    for b in 0..c {
        let (mut se, mut mu) = (0.0, 0.0);
        for y in 0..h {
            for xx in 0..w {
                let d = o.get(y, xx, b) as f64 - x.get(y, xx, b) as f64;
                se += d * d;
                mu += x.get(y, xx, b) as f64;
            }
        }
        mu /= n;
        acc += (se / n) / (mu * mu);
    }
    100.0 / ratio * (acc / c as f64).sqrt()
}

/// Direct 11×11 Gaussian-weighted sums at every interior window position.
pub fn ssim(o: &ImageCube, x: &ImageCube) -> f64 {
    let (h, w, c) = o.dims();
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let gs: f64 = g.iter().sum();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    for b in 0..c {
        let (mut acc, mut count) = (0.0, 0);
        for y0 in 0..=h - 11 {
            for x0 in 0..=w - 11 {
                let (mut mp, mut mq, mut pp, mut qq, mut pq) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let wt = g[i] * g[j] / (gs * gs);
                        let p = o.get(y0 + i, x0 + j, b) as f64;
                        let q = x.get(y0 + i, x0 + j, b) as f64;
                        mp += wt * p;
                        mq += wt * q;
                        pp += wt * p * p;
                        qq += wt * q * q;
                        pq += wt * p * q;
                    }
                }
                let (vp, vq, cv) = (pp - mp * mp, qq - mq * mq, pq - mp * mq);
                acc += (2.0 * mp * mq + c1) * (2.0 * cv + c2) / ((mp * mp + mq * mq + c1) * (vp + vq + c2));
                count += 1;
            }
        }
        total += acc / count as f64;
    }
    total / c as f64
}

/// Scalar quality index over a whole plane as a single block, as the product
/// of correlation, luminance and contrast terms.
pub fn q(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len() as f64;
    let mp = p.iter().sum::<f64>() / n;
    let mq = q.iter().sum::<f64>() / n;
    let vp = p.iter().map(|v| (v - mp).powi(2)).sum::<f64>() / (n - 1.0);
    let vq = q.iter().map(|v| (v - mq).powi(2)).sum::<f64>() / (n - 1.0);
    let cv = p.iter().zip(q).map(|(a, b)| (a - mp) * (b - mq)).sum::<f64>() / (n - 1.0);
    (cv / (vp * vq).sqrt()) * (2.0 * mp * mq / (mp * mp + mq * mq)) * (2.0 * (vp * vq).sqrt() / (vp + vq))
}

pub fn plane(cube: &ImageCube, b: usize) -> Vec<f64> {
    let (h, w, _) = cube.dims();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            out.push(cube.get(y, x, b) as f64);
        }
    }
    out
}

/// `(D_λ, D_s, QNR)` for a single-band guide, every image a single block.
pub fn qnr(o: &ImageCube, a: &ImageCube, b: &ImageCube, ratio: usize) -> (f64, f64, f64) {
    let c = o.bands();
    let (mut dl, mut pairs) = (0.0, 0.0);
    for i in 0..c {
        for j in i + 1..c {
            dl += (q(&plane(o, i), &plane(o, j)) - q(&plane(b, i), &plane(b, j))).abs();
            pairs += 1.0;
        }
    }
    dl /= pairs;
    let a_low = blur_decimate(a, DEFAULT_BLUR_SIGMA, ratio).expect("guide divisible by ratio");
    let mut ds = 0.0;
    for k in 0..c {
        ds += (q(&plane(o, k), &plane(a, 0)) - q(&plane(b, k), &plane(&a_low, 0))).abs();
    }
    ds /= c as f64;
    (dl, ds, (1.0 - dl) * (1.0 - ds))
}

/// `(Cspa·Tc) ⊙ (Tb·Cspe)` for one head by explicit index loops.
/// `cspa` is `hw×hw`, `cspe` is `s×s`, `tb` and `tc` are `hw×s`, all row-major.
pub fn ssio(cspa: &[f64], cspe: &[f64], tb: &[f64], tc: &[f64], hw: usize, s: usize) -> Vec<f64> {
    let mut out = vec![0.0; hw * s];
    for i in 0..hw {
        for k in 0..s {
            let mut left = 0.0;
            for j in 0..hw {
                left += cspa[i * hw + j] * tc[j * s + k];
            }
            let mut right = 0.0;
            for m in 0..s {
                right += tb[i * s + m] * cspe[m * s + k];
            }
            out[i * s + k] = left * right;
        }
    }
    out
}
