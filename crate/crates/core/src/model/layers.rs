//! Building blocks shared by both branches. Inputs are `[batch, H, W, S_k]`.

use super::{Bound, ModelError};
use crate::tensor::{ConvMode, Graph, Real, Var};

/// Convolution plus bias.
pub fn conv_bias<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    name: &str,
    x: Var,
    mode: ConvMode,
) -> Result<Var, ModelError> {
    let y = g.conv2d(x, p.var(&format!("{name}.w"))?, mode)?;
    Ok(g.add_bias(y, p.var(&format!("{name}.b"))?)?)
}

/// Per-position affine map.
pub fn affine<T: Real>(g: &mut Graph<T>, p: &Bound, name: &str, x: Var) -> Result<Var, ModelError> {
    Ok(g.fully_connected(
        x,
        p.var(&format!("{name}.w"))?,
        p.var(&format!("{name}.b"))?,
    )?)
}

/// `x + conv3×3(lrelu(conv3×3(x)))`.
pub fn resblock<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    name: &str,
    x: Var,
    slope: f64,
) -> Result<Var, ModelError> {
    let h = conv_bias(g, p, &format!("{name}.conv1"), x, ConvMode::same(3))?;
    let h = g.lrelu(h, slope)?;
    let h = conv_bias(g, p, &format!("{name}.conv2"), h, ConvMode::same(3))?;
    Ok(g.add(x, h)?)
}

/// `x + FC₂(lrelu(FC₁(x)))` at every position.
pub fn mlp<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    name: &str,
    x: Var,
    slope: f64,
) -> Result<Var, ModelError> {
    let h = affine(g, p, &format!("{name}.fc1"), x)?;
    let h = g.lrelu(h, slope)?;
    let h = affine(g, p, &format!("{name}.fc2"), h)?;
    Ok(g.add(x, h)?)
}

/// `H×W×S_k → H/2×W/2×2S_k`: 2×2 stride-2 convolution, then depthwise widening.
pub fn encode_step<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    name: &str,
    x: Var,
) -> Result<Var, ModelError> {
    let y = conv_bias(
        g,
        p,
        &format!("{name}.down"),
        x,
        ConvMode::Standard { stride: 2, pad: 0 },
    )?;
    let k = p.var(&format!("{name}.widen.w"))?;
    let pad = g.shape(k)[0] / 2;
    let y = g.conv2d(y, k, ConvMode::Depthwise { stride: 1, pad })?;
    Ok(g.add_bias(y, p.var(&format!("{name}.widen.b"))?)?)
}

/// `H×W×2S_k → 2H×2W×S_k` by a 2×2 stride-2 transposed convolution.
pub fn decode_step<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    name: &str,
    x: Var,
) -> Result<Var, ModelError> {
    conv_bias(g, p, name, x, ConvMode::Transposed { stride: 2 })
}
