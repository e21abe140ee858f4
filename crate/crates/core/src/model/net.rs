use super::layers::{conv_bias, decode_step, encode_step, mlp, resblock};
use super::s2block::s2block_forward;
use super::{Bound, ModelConfig, ModelError, ParamStore, Variant};
use crate::data::{upsample_lowres, ImageCube, RATIO};
use crate::tensor::{ConvMode, Graph, Real, Tensor, TensorError, Var};

/// Network inputs as `[1, H, W, ·]` tensors: guide `A` and upsampled `B^U`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared<T> {
    pub a: Tensor<T>,
    pub bu: Tensor<T>,
}

fn to_tensor<T: Real>(cube: &ImageCube) -> Tensor<T> {
    let (h, w, c) = cube.dims();
    let data = cube.data().iter().map(|&v| T::c(v as f64)).collect();
    Tensor::new(vec![1, h, w, c], data).expect("cube extents match its data")
}

impl<T: Real> Prepared<T> {
    /// Validates extents against `cfg` and upsamples `B`.
    pub fn new(a: &ImageCube, b: &ImageCube, cfg: &ModelConfig) -> Result<Self, ModelError> {
        let (h, w, c) = a.dims();
        if h % RATIO != 0 || w % RATIO != 0 {
            return Err(ModelError::Config(format!(
                "guide extents {h}x{w} must be divisible by {RATIO}"
            )));
        }
        if b.height() * RATIO != h || b.width() * RATIO != w {
            return Err(ModelError::Config(format!(
                "low-resolution extents {}x{} must be a quarter of {h}x{w}",
                b.height(),
                b.width()
            )));
        }
        if c != cfg.guide_channels || b.bands() != cfg.bands {
            return Err(TensorError::Dimension {
                op: "u2net_forward",
                lhs: vec![c, b.bands()],
                rhs: vec![cfg.guide_channels, cfg.bands],
            }
            .into());
        }
        let bu = upsample_lowres(b, RATIO, cfg.upsampler)?;
        Ok(Prepared {
            a: to_tensor(a),
            bu: to_tensor(&bu),
        })
    }
}

/// Records the network on `g` for inputs `a` (`[B,H,W,c]`) and `bu` (`[B,H,W,C]`).
pub fn forward_graph<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &ModelConfig,
    a: Var,
    bu: Var,
) -> Result<Var, ModelError> {
    let slope = cfg.lrelu_slope;
    let r = cfg.resblocks_per_stage;
    let sp = cfg.head_width;
    let same3 = ConvMode::same(3);

    let f5 = if cfg.variant == Variant::V1 {
        let x = g.concat(a, bu)?;
        let x = conv_bias(g, p, "lift", x, same3)?;
        let stage = |g: &mut Graph<T>, k: usize, x: Var| -> Result<Var, ModelError> {
            let mut f = s2block_forward(g, p, &format!("main.s{k}.s2"), x, x, sp, Variant::V1)?.out;
            for i in 0..r {
                f = mlp(g, p, &format!("main.s{k}.mlp{i}"), f, slope)?;
            }
            Ok(f)
        };
        let f1 = stage(g, 1, x)?;
        let x = encode_step(g, p, "main.enc1", f1)?;
        let f2 = stage(g, 2, x)?;
        let x = encode_step(g, p, "main.enc2", f2)?;
        let f3 = stage(g, 3, x)?;
        let x = decode_step(g, p, "main.dec1", f3)?;
        let x = g.add(x, f2)?;
        let f4 = stage(g, 4, x)?;
        let x = decode_step(g, p, "main.dec2", f4)?;
        let x = g.add(x, f1)?;
        stage(g, 5, x)?
    } else {
        let res = |g: &mut Graph<T>, k: usize, mut x: Var| -> Result<Var, ModelError> {
            for i in 0..r {
                x = resblock(g, p, &format!("spa.s{k}.res{i}"), x, slope)?;
            }
            Ok(x)
        };
        let x = conv_bias(g, p, "spa.lift", a, same3)?;
        let s1 = res(g, 1, x)?;
        let x = encode_step(g, p, "spa.enc1", s1)?;
        let s2 = res(g, 2, x)?;
        let x = encode_step(g, p, "spa.enc2", s2)?;
        let s3 = res(g, 3, x)?;
        let x = decode_step(g, p, "spa.dec1", s3)?;
        let x = g.add(x, s2)?;
        let s4 = res(g, 4, x)?;
        let x = decode_step(g, p, "spa.dec2", s4)?;
        let s5 = g.add(x, s1)?;

        let stage = |g: &mut Graph<T>, k: usize, spa: Var, x: Var| -> Result<Var, ModelError> {
            let mut f =
                s2block_forward(g, p, &format!("spe.s{k}.s2"), spa, x, sp, cfg.variant)?.out;
            for i in 0..r {
                f = mlp(g, p, &format!("spe.s{k}.mlp{i}"), f, slope)?;
            }
            Ok(f)
        };
        let x = conv_bias(g, p, "spe.lift", bu, same3)?;
        let f1 = stage(g, 1, s1, x)?;
        let x = encode_step(g, p, "spe.enc1", f1)?;
        let f2 = stage(g, 2, s2, x)?;
        let x = encode_step(g, p, "spe.enc2", f2)?;
        let f3 = stage(g, 3, s3, x)?;
        let x = decode_step(g, p, "spe.dec1", f3)?;
        let x = g.add(x, f2)?;
        let f4 = stage(g, 4, s4, x)?;
        let x = decode_step(g, p, "spe.dec2", f4)?;
        let x = g.add(x, f1)?;
        stage(g, 5, s5, x)?
    };
    let o = conv_bias(g, p, "head", f5, same3)?;
    Ok(g.add(o, bu)?)
}

/// Fuses guide `a` (`H×W×c`) and low-resolution `b` (`H/4×W/4×C`) into `H×W×C`,
/// clamped to `[0, 1]`.
pub fn u2net_forward<T: Real>(
    a: &ImageCube,
    b: &ImageCube,
    params: &ParamStore<T>,
    cfg: &ModelConfig,
) -> Result<ImageCube, ModelError> {
    cfg.validate()?;
    let prep = Prepared::<T>::new(a, b, cfg)?;
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let av = g.leaf(&prep.a);
    let bv = g.leaf(&prep.bu);
    let o = forward_graph(&mut g, &bound, cfg, av, bv)?;
    let data = g.value(o).iter().map(|v| v.f64() as f32).collect();
    let mut cube = ImageCube::from_clamped(a.height(), a.width(), cfg.bands, data)?;
    cube.bit_depth_origin = b.bit_depth_origin;
    cube.band_labels = b.band_labels.clone();
    Ok(cube)
}
