//! Spatial-spectral fusion block.
//!
//! Per-position features `H×W×S_k` are flattened to `HW×S_k` and split into
//! `N = S_k/S′` heads of contiguous `S′`-wide column groups. Head tensors use
//! the layout `[batch·N, HW, S′]`, so each head is a row-major `HW×S′` matrix.

use super::layers::affine;
use super::{Bound, ModelError, Variant};
use crate::tensor::{Graph, Real, Var};

/// `softmax_rows(Ta·Tbᵀ / √S′)`, one `HW×HW` matrix per head.
pub fn spatial_self_correlation<T: Real>(
    g: &mut Graph<T>,
    ta: Var,
    tb: Var,
) -> Result<Var, ModelError> {
    let sp = *g.shape(ta).last().unwrap_or(&1);
    let logits = g.bmm(ta, tb, false, true)?;
    let logits = g.scale(logits, 1.0 / (sp as f64).sqrt())?;
    Ok(g.softmax_rows(logits)?)
}

/// `softmax_rows(Tcᵀ·Td / (√(S′³)/HW))`, one `S′×S′` matrix per head.
pub fn spectral_self_correlation<T: Real>(
    g: &mut Graph<T>,
    tc: Var,
    td: Var,
) -> Result<Var, ModelError> {
    let shape = g.shape(tc);
    let (hw, sp) = (shape[shape.len() - 2] as f64, shape[shape.len() - 1] as f64);
    let logits = g.bmm(tc, td, true, false)?;
    let logits = g.scale(logits, hw / sp.powf(1.5))?;
    Ok(g.softmax_rows(logits)?)
}

/// `(Cspa·Tc) ⊙ (Tb·Cspe)` per head.
pub fn ssio_fuse<T: Real>(
    g: &mut Graph<T>,
    cspa: Var,
    cspe: Var,
    tb: Var,
    tc: Var,
) -> Result<Var, ModelError> {
    let left = g.bmm(cspa, tc, false, false)?;
    let right = g.bmm(tb, cspe, false, false)?;
    Ok(g.mul(left, right)?)
}

/// `[B, H, W, S_k] → [B·N, HW, S′]`.
pub fn split_heads<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    head_width: usize,
) -> Result<Var, ModelError> {
    let s = g.shape(x).to_vec();
    let (b, hw, sk) = (s[0], s[1] * s[2], s[3]);
    if sk % head_width != 0 {
        return Err(ModelError::Config(format!(
            "width {sk} is not divisible by head width {head_width}"
        )));
    }
    let n = sk / head_width;
    let y = g.reshape(x, &[b, hw, n, head_width])?;
    let y = g.permute(y, &[0, 2, 1, 3])?;
    Ok(g.reshape(y, &[b * n, hw, head_width])?)
}

/// Inverse of [`split_heads`] for a target `[B, H, W, S_k]`.
pub fn merge_heads<T: Real>(g: &mut Graph<T>, x: Var, target: &[usize]) -> Result<Var, ModelError> {
    let (b, h, w, sk) = (target[0], target[1], target[2], target[3]);
    let hp = *g.shape(x).last().unwrap_or(&1);
    let y = g.reshape(x, &[b, sk / hp, h * w, hp])?;
    let y = g.permute(y, &[0, 2, 1, 3])?;
    Ok(g.reshape(y, &[b, h, w, sk])?)
}

/// Intermediate tensors of one block evaluation, for inspection.
#[derive(Debug, Clone, Copy)]
pub struct S2Trace {
    pub cspa: Option<Var>,
    pub cspe: Option<Var>,
    pub out: Var,
}

/// Fuses `fspa` into `fspe`; both `[B, H, W, S_k]`.
pub fn s2block_forward<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    name: &str,
    fspa: Var,
    fspe: Var,
    head_width: usize,
    variant: Variant,
) -> Result<S2Trace, ModelError> {
    if g.shape(fspa) != g.shape(fspe) || g.shape(fspa).len() != 4 {
        return Err(crate::tensor::TensorError::Dimension {
            op: "s2block",
            lhs: g.shape(fspa).to_vec(),
            rhs: g.shape(fspe).to_vec(),
        }
        .into());
    }
    let shape = g.shape(fspa).to_vec();
    if variant == Variant::V2 {
        let cat = g.concat(fspa, fspe)?;
        let out = affine(g, p, &format!("{name}.fuse"), cat)?;
        return Ok(S2Trace {
            cspa: None,
            cspe: None,
            out,
        });
    }
    let head = |g: &mut Graph<T>, map: &str, src: Var| -> Result<Var, ModelError> {
        let t = affine(g, p, &format!("{name}.{map}"), src)?;
        split_heads(g, t, head_width)
    };
    let (fused, cspa, cspe) = match variant {
        Variant::Full | Variant::V1 => {
            let ta = head(g, "ta", fspa)?;
            let tb = head(g, "tb", fspa)?;
            let tc = head(g, "tc", fspe)?;
            let td = head(g, "td", fspe)?;
            let cspa = spatial_self_correlation(g, ta, tb)?;
            let cspe = spectral_self_correlation(g, tc, td)?;
            (ssio_fuse(g, cspa, cspe, tb, tc)?, Some(cspa), Some(cspe))
        }
        Variant::V3 => {
            let ta = head(g, "ta", fspa)?;
            let tb = head(g, "tb", fspa)?;
            let tc = head(g, "tc", fspe)?;
            let cspa = spatial_self_correlation(g, ta, tb)?;
            (g.bmm(cspa, tc, false, false)?, Some(cspa), None)
        }
        Variant::V4 => {
            let tb = head(g, "tb", fspa)?;
            let tc = head(g, "tc", fspe)?;
            let td = head(g, "td", fspe)?;
            let cspe = spectral_self_correlation(g, tc, td)?;
            (g.bmm(tb, cspe, false, false)?, None, Some(cspe))
        }
        Variant::V2 => unreachable!("handled above"),
    };
    let m = merge_heads(g, fused, &shape)?;
    let out = affine(g, p, &format!("{name}.out"), m)?;
    Ok(S2Trace { cspa, cspe, out })
}
