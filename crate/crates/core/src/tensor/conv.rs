//! NHWC convolution kernels.
//!
//! Kernel layouts by mode:
//! - `Standard`: `[kh, kw, c_in, c_out]`
//! - `Depthwise`: `[kh, kw, c_in, multiplier]`, output channel `c * multiplier + m`
//! - `Transposed`: `[c_in, kh, kw, c_out]`, no padding, output extent `(n - 1) * stride + k`
//!
//! All padding is zero padding.

use serde::{Deserialize, Serialize};

use super::kernels::gemm;
use super::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvMode {
    Standard { stride: usize, pad: usize },
    Depthwise { stride: usize, pad: usize },
    Transposed { stride: usize },
}

impl ConvMode {
    /// 3x3-style convolution preserving spatial size.
    pub fn same(kernel: usize) -> Self {
        ConvMode::Standard {
            stride: 1,
            pad: kernel / 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConvMode::Standard { .. } => "standard",
            ConvMode::Depthwise { .. } => "depthwise",
            ConvMode::Transposed { .. } => "transposed",
        }
    }
}

/// Resolved geometry of one convolution call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub c_in: usize,
    pub kh: usize,
    pub kw: usize,
    pub c_out: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub mode: ConvMode,
}

impl ConvGeom {
    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.batch, self.out_h, self.out_w, self.c_out]
    }

    fn col_width(&self) -> usize {
        self.kh * self.kw * self.c_in
    }
}

/// Validates shapes and computes the output geometry, or a human readable reason.
pub fn plan(x: &[usize], k: &[usize], mode: ConvMode) -> Result<ConvGeom, String> {
    if x.len() != 4 {
        return Err(format!("input must be rank 4 (B,H,W,C), got {x:?}"));
    }
    if k.len() != 4 {
        return Err(format!("kernel must be rank 4, got {k:?}"));
    }
    let (batch, in_h, in_w, c_in) = (x[0], x[1], x[2], x[3]);
    match mode {
        ConvMode::Standard { stride, pad } | ConvMode::Depthwise { stride, pad } => {
            let (kh, kw) = (k[0], k[1]);
            if stride == 0 {
                return Err("stride must be positive".into());
            }
            if k[2] != c_in {
                return Err(format!(
                    "kernel {k:?} expects {} input channels, input {x:?} has {c_in}",
                    k[2]
                ));
            }
            if kh > in_h + 2 * pad || kw > in_w + 2 * pad {
                return Err(format!(
                    "kernel {kh}x{kw} exceeds padded input {x:?} (pad {pad})"
                ));
            }
            let span_h = in_h + 2 * pad - kh;
            let span_w = in_w + 2 * pad - kw;
            if stride > 1 && (span_h % stride != 0 || span_w % stride != 0) {
                return Err(format!(
                    "input {x:?} is not evenly divisible by the {kh}x{kw} stride-{stride} window"
                ));
            }
            let c_out = match mode {
                ConvMode::Depthwise { .. } => c_in * k[3],
                _ => k[3],
            };
            Ok(ConvGeom {
                batch,
                in_h,
                in_w,
                c_in,
                kh,
                kw,
                c_out,
                out_h: span_h / stride + 1,
                out_w: span_w / stride + 1,
                stride,
                pad,
                mode,
            })
        }
        ConvMode::Transposed { stride } => {
            if stride == 0 {
                return Err("stride must be positive".into());
            }
            if k[0] != c_in {
                return Err(format!(
                    "kernel {k:?} expects {} input channels, input {x:?} has {c_in}",
                    k[0]
                ));
            }
            let (kh, kw) = (k[1], k[2]);
            Ok(ConvGeom {
                batch,
                in_h,
                in_w,
                c_in,
                kh,
                kw,
                c_out: k[3],
                out_h: (in_h.max(1) - 1) * stride + kh,
                out_w: (in_w.max(1) - 1) * stride + kw,
                stride,
                pad: 0,
                mode,
            })
        }
    }
}

fn im2col<T: Real>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let rows = g.batch * g.out_h * g.out_w;
    let width = g.col_width();
    let mut col = vec![T::zero(); rows * width];
    let mut row = 0;
    for b in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let dst = &mut col[row * width..(row + 1) * width];
                for ky in 0..g.kh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix >= g.in_w as isize {
                            continue;
                        }
                        let src = ((b * g.in_h + iy as usize) * g.in_w + ix as usize) * g.c_in;
                        let off = (ky * g.kw + kx) * g.c_in;
                        dst[off..off + g.c_in].copy_from_slice(&x[src..src + g.c_in]);
                    }
                }
                row += 1;
            }
        }
    }
    col
}

fn col2im_add<T: Real>(col: &[T], g: &ConvGeom, dx: &mut [T]) {
    let width = g.col_width();
    let mut row = 0;
    for b in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let src = &col[row * width..(row + 1) * width];
                for ky in 0..g.kh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix >= g.in_w as isize {
                            continue;
                        }
                        let dst = ((b * g.in_h + iy as usize) * g.in_w + ix as usize) * g.c_in;
                        let off = (ky * g.kw + kx) * g.c_in;
                        for (d, &s) in dx[dst..dst + g.c_in]
                            .iter_mut()
                            .zip(&src[off..off + g.c_in])
                        {
                            *d += s;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

pub fn forward<T: Real>(x: &[T], k: &[T], g: &ConvGeom) -> Vec<T> {
    match g.mode {
        ConvMode::Standard { .. } => {
            let rows = g.batch * g.out_h * g.out_w;
            let col = im2col(x, g);
            let mut out = vec![T::zero(); rows * g.c_out];
            gemm(
                rows,
                g.col_width(),
                g.c_out,
                &col,
                false,
                k,
                false,
                &mut out,
                false,
            );
            out
        }
        ConvMode::Depthwise { .. } => depthwise_forward(x, k, g),
        ConvMode::Transposed { .. } => {
            let rows = g.batch * g.in_h * g.in_w;
            let zw = g.kh * g.kw * g.c_out;
            let mut z = vec![T::zero(); rows * zw];
            gemm(rows, g.c_in, zw, x, false, k, false, &mut z, false);
            let mut out = vec![T::zero(); g.batch * g.out_h * g.out_w * g.c_out];
            scatter_transposed(&z, g, &mut out);
            out
        }
    }
}

/// Accumulates input and kernel gradients for upstream `dy`.
pub fn backward<T: Real>(
    x: &[T],
    k: &[T],
    dy: &[T],
    g: &ConvGeom,
    dx: Option<&mut [T]>,
    dk: Option<&mut [T]>,
) {
    match g.mode {
        ConvMode::Standard { .. } => {
            let rows = g.batch * g.out_h * g.out_w;
            let width = g.col_width();
            if let Some(dk) = dk {
                let col = im2col(x, g);
                gemm(width, rows, g.c_out, &col, true, dy, false, dk, true);
            }
            if let Some(dx) = dx {
                let mut dcol = vec![T::zero(); rows * width];
                gemm(rows, g.c_out, width, dy, false, k, true, &mut dcol, false);
                col2im_add(&dcol, g, dx);
            }
        }
        ConvMode::Depthwise { .. } => depthwise_backward(x, k, dy, g, dx, dk),
        ConvMode::Transposed { .. } => {
            let rows = g.batch * g.in_h * g.in_w;
            let zw = g.kh * g.kw * g.c_out;
            let dz = gather_transposed(dy, g);
            if let Some(dk) = dk {
                gemm(g.c_in, rows, zw, x, true, &dz, false, dk, true);
            }
            if let Some(dx) = dx {
                gemm(rows, zw, g.c_in, &dz, false, k, true, dx, true);
            }
        }
    }
}

fn scatter_transposed<T: Real>(z: &[T], g: &ConvGeom, out: &mut [T]) {
    let zw = g.kh * g.kw * g.c_out;
    let mut row = 0;
    for b in 0..g.batch {
        for iy in 0..g.in_h {
            for ix in 0..g.in_w {
                let zr = &z[row * zw..(row + 1) * zw];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let oy = iy * g.stride + ky;
                        let ox = ix * g.stride + kx;
                        let dst = ((b * g.out_h + oy) * g.out_w + ox) * g.c_out;
                        let off = (ky * g.kw + kx) * g.c_out;
                        for (d, &s) in out[dst..dst + g.c_out]
                            .iter_mut()
                            .zip(&zr[off..off + g.c_out])
                        {
                            *d += s;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn gather_transposed<T: Real>(dy: &[T], g: &ConvGeom) -> Vec<T> {
    let zw = g.kh * g.kw * g.c_out;
    let mut dz = vec![T::zero(); g.batch * g.in_h * g.in_w * zw];
    let mut row = 0;
    for b in 0..g.batch {
        for iy in 0..g.in_h {
            for ix in 0..g.in_w {
                let zr = &mut dz[row * zw..(row + 1) * zw];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let oy = iy * g.stride + ky;
                        let ox = ix * g.stride + kx;
                        let src = ((b * g.out_h + oy) * g.out_w + ox) * g.c_out;
                        let off = (ky * g.kw + kx) * g.c_out;
                        zr[off..off + g.c_out].copy_from_slice(&dy[src..src + g.c_out]);
                    }
                }
                row += 1;
            }
        }
    }
    dz
}

fn depthwise_forward<T: Real>(x: &[T], k: &[T], g: &ConvGeom) -> Vec<T> {
    let mult = g.c_out / g.c_in;
    let mut out = vec![T::zero(); g.batch * g.out_h * g.out_w * g.c_out];
    for b in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let o = ((b * g.out_h + oy) * g.out_w + ox) * g.c_out;
                for ky in 0..g.kh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix >= g.in_w as isize {
                            continue;
                        }
                        let src = ((b * g.in_h + iy as usize) * g.in_w + ix as usize) * g.c_in;
                        let kbase = (ky * g.kw + kx) * g.c_out;
                        for c in 0..g.c_in {
                            let xv = x[src + c];
                            for m in 0..mult {
                                out[o + c * mult + m] += xv * k[kbase + c * mult + m];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn depthwise_backward<T: Real>(
    x: &[T],
    k: &[T],
    dy: &[T],
    g: &ConvGeom,
    mut dx: Option<&mut [T]>,
    mut dk: Option<&mut [T]>,
) {
    let mult = g.c_out / g.c_in;
    for b in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let o = ((b * g.out_h + oy) * g.out_w + ox) * g.c_out;
                for ky in 0..g.kh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    for kx in 0..g.kw {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix >= g.in_w as isize {
                            continue;
                        }
                        let src = ((b * g.in_h + iy as usize) * g.in_w + ix as usize) * g.c_in;
                        let kbase = (ky * g.kw + kx) * g.c_out;
                        for c in 0..g.c_in {
                            for m in 0..mult {
                                let d = dy[o + c * mult + m];
                                if let Some(dx) = dx.as_deref_mut() {
                                    dx[src + c] += k[kbase + c * mult + m] * d;
                                }
                                if let Some(dk) = dk.as_deref_mut() {
                                    dk[kbase + c * mult + m] += x[src + c] * d;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}
