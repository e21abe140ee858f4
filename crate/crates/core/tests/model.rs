use fuselab_core::data::{upsample_lowres, DegradeConfig, ImageCube, SampleTriple, Upsampler};
use fuselab_core::model::layers::{decode_step, encode_step, mlp, resblock};
use fuselab_core::model::s2block::{
    merge_heads, s2block_forward, spatial_self_correlation, spectral_self_correlation, split_heads,
    ssio_fuse,
};
use fuselab_core::model::{
    forward_graph, layout, param_count, u2net_forward, Checkpoint, ModelConfig, ModelError,
    ParamStore, Prepared, Variant,
};
use fuselab_core::tensor::gradcheck::finite_diff_check_many;
use fuselab_core::verify::{EndToEnd, END_TO_END_TOL};
use fuselab_core::tensor::{ConvMode, Graph, Tensor, TensorError};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn tiny(variant: Variant) -> ModelConfig {
    ModelConfig::new(1, 4, 8, 4)
        .with_variant(variant)
        .with_seed(3)
}

fn triple(h: usize, c: usize, bands: usize, seed: u64) -> SampleTriple {
    let guide = if c == 3 {
        fuselab_core::data::Guide::Rgb
    } else {
        fuselab_core::data::Guide::UniformPan
    };
    let cfg = DegradeConfig {
        guide,
        ..DegradeConfig::default()
    };
    SampleTriple::synthesize("t", h.max(16), bands, &cfg, seed)
        .map(|t| {
            if h >= 16 {
                t
            } else {
                let a = t.a.crop(0, 0, h, h).unwrap();
                let b = t.b.crop(0, 0, h / 4, h / 4).unwrap();
                let x = t.x.unwrap().crop(0, 0, h, h).unwrap();
                SampleTriple::new("t", a, b, Some(x)).unwrap()
            }
        })
        .unwrap()
}

/// Binds `store` on a fresh graph and returns the graph plus handles by name.
fn bound_graph(store: &ParamStore<f64>) -> (Graph<f64>, fuselab_core::model::Bound) {
    let mut g = Graph::new();
    let b = store.bind(&mut g, true);
    (g, b)
}

#[test]
fn attention_examples() {
    let mut g = Graph::<f64>::new();
    let t = g.constant(&[1, 2, 1], vec![1.0, 0.0]).unwrap();
    let c = spatial_self_correlation(&mut g, t, t).unwrap();
    let e = std::f64::consts::E;
    let want = [e / (e + 1.0), 1.0 / (e + 1.0), 0.5, 0.5];
    for (a, b) in g.value(c).iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }

    let t = g.constant(&[1, 1, 2], vec![1.0, 0.0]).unwrap();
    let c = spectral_self_correlation(&mut g, t, t).unwrap();
    let l = 1.0 / 8f64.sqrt();
    let want = [l.exp() / (l.exp() + 1.0), 1.0 / (l.exp() + 1.0), 0.5, 0.5];
    for (a, b) in g.value(c).iter().zip(want) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    // identical rows of Ta give uniform spatial attention; zero inputs give uniform spectral
    let ta = g
        .constant(&[2, 5, 3], (0..30).map(|i| (i % 3) as f64).collect())
        .unwrap();
    let c = spatial_self_correlation(&mut g, ta, ta).unwrap();
    let tb = g
        .constant(&[2, 5, 3], (0..30).map(|i| (i as f64).sin()).collect())
        .unwrap();
    assert!(g.value(c).iter().all(|v| (v - 0.2).abs() < 1e-12));
    let z = g.constant(&[2, 5, 3], vec![0.0; 30]).unwrap();
    let c = spectral_self_correlation(&mut g, z, tb).unwrap();
    assert!(g.value(c).iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
    let tc = g
        .constant(&[1, 4, 3], (0..12).map(|i| (i / 3) as f64).collect())
        .unwrap();
    let c = ssio_fuse(&mut g, c, c, tc, tb).unwrap_err();
    assert!(matches!(
        c,
        ModelError::Tensor(TensorError::Dimension { .. })
    ));
}

#[test]
fn ssio_identity_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = Graph::<f64>::new();
    let (hw, sp) = (3, 2);
    let eye = |n: usize| Tensor::from_fn(&[1, n, n], |i| if i / n == i % n { 1.0 } else { 0.0 });
    let tb = g.leaf(&rand_tensor(&[1, hw, sp], &mut rng));
    let tc = g.leaf(&rand_tensor(&[1, hw, sp], &mut rng));
    let (ia, ie) = (g.leaf(&eye(hw)), g.leaf(&eye(sp)));
    let f = ssio_fuse(&mut g, ia, ie, tb, tc).unwrap();
    let want: Vec<f64> = g
        .value(tb)
        .iter()
        .zip(g.value(tc))
        .map(|(a, b)| a * b)
        .collect();
    assert_eq!(g.value(f), &want[..]);

    let ones = g.constant(&[1, hw, sp], vec![1.0; hw * sp]).unwrap();
    let cspa = g.leaf(&rand_tensor(&[1, hw, hw], &mut rng));
    let f = ssio_fuse(&mut g, cspa, ie, ones, tc).unwrap();
    let want = g.bmm(cspa, tc, false, false).unwrap();
    assert_eq!(g.value(f), g.value(want));
}

#[test]
fn head_split_uses_contiguous_column_groups() {
    let mut g = Graph::<f64>::new();
    // [1, 1, 2, 4] with S' = 2: head 0 holds columns 0..2, head 1 columns 2..4
    let x = g
        .constant(&[1, 1, 2, 4], (0..8).map(f64::from).collect())
        .unwrap();
    let h = split_heads(&mut g, x, 2).unwrap();
    assert_eq!(g.shape(h), &[2, 2, 2]);
    assert_eq!(g.value(h), &[0.0, 1.0, 4.0, 5.0, 2.0, 3.0, 6.0, 7.0]);
    let back = merge_heads(&mut g, h, &[1, 1, 2, 4]).unwrap();
    assert_eq!(g.value(back), g.value(x));
    assert!(split_heads(&mut g, x, 3).is_err());
}

fn s2_store(sk: usize, variant: Variant, seed: u64) -> ParamStore<f64> {
    // a single-stage configuration whose stage-1 block has width `sk`
    let cfg = ModelConfig::new(1, 1, sk, 2)
        .with_variant(variant)
        .with_seed(seed);
    ParamStore::init(&cfg).unwrap()
}

fn s2_name(variant: Variant) -> &'static str {
    if variant == Variant::V1 {
        "main.s1.s2"
    } else {
        "spe.s1.s2"
    }
}

#[test]
fn s2block_shapes_and_zero_output_map() {
    for variant in Variant::ALL {
        let mut store = s2_store(4, variant, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut g, b) = bound_graph(&store);
        let fa = g.leaf(&rand_tensor(&[2, 3, 5, 4], &mut rng));
        let fe = g.leaf(&rand_tensor(&[2, 3, 5, 4], &mut rng));
        let y = s2block_forward(&mut g, &b, s2_name(variant), fa, fe, 2, variant).unwrap();
        assert_eq!(g.shape(y.out), &[2, 3, 5, 4]);
        let out_map = if variant == Variant::V2 {
            "fuse"
        } else {
            "out"
        };
        store
            .get_mut(&format!("{}.{out_map}.w", s2_name(variant)))
            .unwrap()
            .data
            .fill(0.0);
        let (mut g, b) = bound_graph(&store);
        let fa = g.leaf(&rand_tensor(&[1, 2, 2, 4], &mut rng));
        let y = s2block_forward(&mut g, &b, s2_name(variant), fa, fa, 2, variant).unwrap();
        assert!(g.value(y.out).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn s2block_is_permutation_equivariant() {
    let store = s2_store(4, Variant::Full, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (h, w, s) = (3, 4, 4);
    let fa = rand_tensor(&[1, h, w, s], &mut rng);
    let fe = rand_tensor(&[1, h, w, s], &mut rng);
    let mut perm: Vec<usize> = (0..h * w).collect();
    use rand::seq::SliceRandom;
    perm.shuffle(&mut rng);
    let permute = |t: &Tensor<f64>| {
        let d = t.data();
        Tensor::new(
            t.shape().to_vec(),
            perm.iter()
                .flat_map(|&p| d[p * s..(p + 1) * s].to_vec())
                .collect(),
        )
        .unwrap()
    };
    let run = |a: &Tensor<f64>, e: &Tensor<f64>| {
        let (mut g, b) = bound_graph(&store);
        let (av, ev) = (g.leaf(a), g.leaf(e));
        let y = s2block_forward(&mut g, &b, "spe.s1.s2", av, ev, 2, Variant::Full).unwrap();
        g.to_tensor(y.out)
    };
    let y = run(&fa, &fe);
    let yp = run(&permute(&fa), &permute(&fe));
    for (a, b) in permute(&y).data().iter().zip(yp.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn residual_blocks_are_identity_with_zero_weights() {
    let cfg = tiny(Variant::Full);
    let mut store = ParamStore::<f64>::init(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for name in ["spa.s1.res0.conv2.w", "spe.s1.mlp0.fc2.w"] {
        store.get_mut(name).unwrap().data.fill(0.0);
    }
    let (mut g, b) = bound_graph(&store);
    let x = g.leaf(&rand_tensor(&[1, 8, 8, 8], &mut rng));
    let y = resblock(&mut g, &b, "spa.s1.res0", x, 0.2).unwrap();
    assert_eq!(g.shape(y), &[1, 8, 8, 8]);
    assert_eq!(g.value(y), g.value(x));
    let y = mlp(&mut g, &b, "spe.s1.mlp0", x, 0.2).unwrap();
    assert_eq!(g.value(y), g.value(x));
}

#[test]
fn blocks_match_primitive_composition() {
    let cfg = tiny(Variant::Full);
    let store = ParamStore::<f64>::init(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let xt = rand_tensor(&[1, 4, 4, 8], &mut rng);
    let (mut g, b) = bound_graph(&store);
    let x = g.leaf(&xt);
    let y = resblock(&mut g, &b, "spa.s1.res0", x, 0.2).unwrap();
    let m = mlp(&mut g, &b, "spe.s1.mlp0", x, 0.2).unwrap();

    // independent evaluation by direct loops
    let p = |n: &str| store.get(n).unwrap().data.clone();
    let conv = |inp: &[f64], w: &[f64], bias: &[f64]| {
        let mut out = vec![0.0; 4 * 4 * 8];
        for yy in 0..4i32 {
            for xx in 0..4i32 {
                for co in 0..8 {
                    let mut s = bias[co];
                    for ky in 0..3i32 {
                        for kx in 0..3i32 {
                            let (iy, ix) = (yy + ky - 1, xx + kx - 1);
                            if !(0..4).contains(&iy) || !(0..4).contains(&ix) {
                                continue;
                            }
                            for ci in 0..8 {
                                s += inp[((iy * 4 + ix) * 8) as usize + ci]
                                    * w[((ky * 3 + kx) as usize * 8 + ci) * 8 + co];
                            }
                        }
                    }
                    out[((yy * 4 + xx) * 8) as usize + co] = s;
                }
            }
        }
        out
    };
    let lrelu = |v: Vec<f64>| {
        v.into_iter()
            .map(|x| if x >= 0.0 { x } else { 0.2 * x })
            .collect::<Vec<_>>()
    };
    let h = lrelu(conv(
        xt.data(),
        &p("spa.s1.res0.conv1.w"),
        &p("spa.s1.res0.conv1.b"),
    ));
    let h = conv(&h, &p("spa.s1.res0.conv2.w"), &p("spa.s1.res0.conv2.b"));
    for ((a, x), hv) in g.value(y).iter().zip(xt.data()).zip(&h) {
        assert!((a - (x + hv)).abs() < 1e-10);
    }
    let fc = |inp: &[f64], w: &[f64], bias: &[f64]| {
        inp.chunks(8)
            .flat_map(|r| {
                (0..8).map(move |o| bias[o] + (0..8).map(|i| r[i] * w[i * 8 + o]).sum::<f64>())
            })
            .collect::<Vec<_>>()
    };
    let h = lrelu(fc(
        xt.data(),
        &p("spe.s1.mlp0.fc1.w"),
        &p("spe.s1.mlp0.fc1.b"),
    ));
    let h = fc(&h, &p("spe.s1.mlp0.fc2.w"), &p("spe.s1.mlp0.fc2.b"));
    for ((a, x), hv) in g.value(m).iter().zip(xt.data()).zip(&h) {
        assert!((a - (x + hv)).abs() < 1e-10);
    }
}

#[test]
fn mlp_commutes_with_position_permutation() {
    let store = ParamStore::<f64>::init(&tiny(Variant::Full)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let xt = rand_tensor(&[1, 4, 4, 8], &mut rng);
    let (mut g, b) = bound_graph(&store);
    let x = g.leaf(&xt);
    let flipped = g.permute(x, &[0, 2, 1, 3]).unwrap();
    let y1 = mlp(&mut g, &b, "spe.s1.mlp0", x, 0.2).unwrap();
    let y1 = g.permute(y1, &[0, 2, 1, 3]).unwrap();
    let y2 = mlp(&mut g, &b, "spe.s1.mlp0", flipped, 0.2).unwrap();
    assert_eq!(g.value(y1), g.value(y2));
}

#[test]
fn encoder_and_decoder_shapes() {
    let store = ParamStore::<f64>::init(&tiny(Variant::Full)).unwrap();
    let (mut g, b) = bound_graph(&store);
    let x = g.constant(&[1, 16, 16, 8], vec![0.1; 16 * 16 * 8]).unwrap();
    let e = encode_step(&mut g, &b, "spa.enc1", x).unwrap();
    assert_eq!(g.shape(e), &[1, 8, 8, 16]);
    let d = decode_step(&mut g, &b, "spa.dec2", e).unwrap();
    assert_eq!(g.shape(d), &[1, 16, 16, 8]);
    let odd = g.constant(&[1, 5, 4, 8], vec![0.0; 160]).unwrap();
    assert!(matches!(
        encode_step(&mut g, &b, "spa.enc1", odd),
        Err(ModelError::Tensor(_))
    ));

    let cfg = ModelConfig::new(1, 1, 2, 1);
    let store = ParamStore::<f64>::init(&cfg).unwrap();
    let (mut g, b) = bound_graph(&store);
    let x = g.constant(&[1, 4, 4, 2], vec![0.3; 32]).unwrap();
    let e = encode_step(&mut g, &b, "spa.enc1", x).unwrap();
    assert_eq!(g.shape(e), &[1, 2, 2, 4]);
}

#[test]
fn encoder_and_decoder_gradients() {
    let cfg = ModelConfig::new(1, 1, 2, 1).with_seed(4);
    let store = ParamStore::<f64>::init(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let names = [
        "spa.enc1.down.w",
        "spa.enc1.down.b",
        "spa.enc1.widen.w",
        "spa.enc1.widen.b",
    ];
    let mut inputs = vec![rand_tensor(&[1, 4, 4, 2], &mut rng)];
    inputs.extend(names.iter().map(|n| {
        let t = store.get(n).unwrap();
        Tensor::new(t.spec.shape.clone(), t.data.clone()).unwrap()
    }));
    let w = rand_tensor(&[1, 2, 2, 4], &mut rng);
    let rep = finite_diff_check_many(
        |g, v| {
            let y = g.conv2d(v[0], v[1], ConvMode::Standard { stride: 2, pad: 0 })?;
            let y = g.add_bias(y, v[2])?;
            let y = g.conv2d(y, v[3], ConvMode::Depthwise { stride: 1, pad: 1 })?;
            let y = g.add_bias(y, v[4])?;
            let wv = g.leaf(&w);
            let p = g.mul(y, wv)?;
            g.sum(p)
        },
        &inputs,
        1e-5,
        None,
    )
    .unwrap();
    assert!(rep.passes(1e-4), "{rep:?}");

    let inputs = vec![
        rand_tensor(&[1, 2, 2, 4], &mut rng),
        Tensor::new(
            vec![4, 2, 2, 2],
            store.get("spa.dec2.w").unwrap().data.clone(),
        )
        .unwrap(),
        rand_tensor(&[2], &mut rng),
    ];
    let w = rand_tensor(&[1, 4, 4, 2], &mut rng);
    let rep = finite_diff_check_many(
        |g, v| {
            let y = g.conv2d(v[0], v[1], ConvMode::Transposed { stride: 2 })?;
            let y = g.add_bias(y, v[2])?;
            let wv = g.leaf(&w);
            let p = g.mul(y, wv)?;
            g.sum(p)
        },
        &inputs,
        1e-5,
        None,
    )
    .unwrap();
    assert!(rep.passes(1e-4), "{rep:?}");
}

#[test]
fn zero_head_returns_upsampled_input_exactly() {
    for (variant, seed) in Variant::ALL.into_iter().zip(0..) {
        let mut cfg = tiny(variant).with_seed(seed);
        cfg.zero_head = true;
        let t = triple(16, 1, 4, seed);
        let store = ParamStore::<f32>::init(&cfg).unwrap();
        let o = u2net_forward(&t.a, &t.b, &store, &cfg).unwrap();
        let bu = upsample_lowres(&t.b, 4, Upsampler::Bicubic).unwrap();
        assert_eq!(o.data(), bu.data(), "{variant:?}");
    }
}

#[test]
fn pansharpening_and_hyperspectral_shapes() {
    let cfg = ModelConfig::new(1, 8, 8, 4);
    let store = ParamStore::<f32>::init(&cfg).unwrap();
    let t = triple(64, 1, 8, 1);
    let o = u2net_forward(&t.a, &t.b, &store, &cfg).unwrap();
    assert_eq!(o.dims(), (64, 64, 8));

    let cfg = ModelConfig::new(3, 31, 8, 4);
    let store = ParamStore::<f32>::init(&cfg).unwrap();
    let t = triple(64, 3, 31, 2);
    let o = u2net_forward(&t.a, &t.b, &store, &cfg).unwrap();
    assert_eq!(o.dims(), (64, 64, 31));
}

#[test]
fn input_contract_errors() {
    let cfg = tiny(Variant::Full);
    let store = ParamStore::<f32>::init(&cfg).unwrap();
    let a = ImageCube::constant(18, 16, 1, 0.5).unwrap();
    let b = ImageCube::constant(4, 4, 4, 0.5).unwrap();
    assert!(matches!(
        u2net_forward(&a, &b, &store, &cfg),
        Err(ModelError::Config(_))
    ));
    let a = ImageCube::constant(16, 16, 1, 0.5).unwrap();
    let b = ImageCube::constant(8, 4, 4, 0.5).unwrap();
    assert!(matches!(
        u2net_forward(&a, &b, &store, &cfg),
        Err(ModelError::Config(_))
    ));
    let b = ImageCube::constant(4, 4, 3, 0.5).unwrap();
    assert!(matches!(
        u2net_forward(&a, &b, &store, &cfg),
        Err(ModelError::Tensor(TensorError::Dimension { .. }))
    ));
    assert!(ParamStore::<f32>::init(&ModelConfig::new(1, 4, 6, 4)).is_err());
}

#[test]
fn parameter_counts() {
    let wv = ModelConfig::new(1, 8, 32, 16);
    let n = param_count(&wv);
    assert!(n >= 500_000, "{n}");
    assert_eq!(n, param_count(&wv.clone().with_seed(99)));
    assert_eq!(n, ParamStore::<f32>::init(&wv).unwrap().numel());
    let wider = ModelConfig::new(1, 8, 64, 16);
    assert!(param_count(&wider) > n);
    // V2 and Full share output shapes but not parameter sets
    assert_ne!(param_count(&wv.clone().with_variant(Variant::V2)), n);
}

#[test]
fn initialization_is_deterministic_and_finite() {
    let cfg = tiny(Variant::Full);
    let a = ParamStore::<f32>::init(&cfg).unwrap();
    assert_eq!(a, ParamStore::<f32>::init(&cfg).unwrap());
    assert!(a.is_finite());
    assert_ne!(
        a,
        ParamStore::<f32>::init(&cfg.clone().with_seed(4)).unwrap()
    );
    let t = triple(16, 1, 4, 0);
    let o1 = u2net_forward(&t.a, &t.b, &a, &cfg).unwrap();
    let o2 = u2net_forward(&t.a, &t.b, &a, &cfg).unwrap();
    assert_eq!(o1, o2);
}

#[test]
fn every_parameter_receives_gradient() {
    for variant in Variant::ALL {
        let cfg = tiny(variant);
        let store = ParamStore::<f64>::init(&cfg).unwrap();
        let t = triple(16, 1, 4, 1);
        let prep = Prepared::<f64>::new(&t.a, &t.b, &cfg).unwrap();
        let (mut g, b) = bound_graph(&store);
        let (a, bu) = (g.leaf(&prep.a), g.leaf(&prep.bu));
        let o = forward_graph(&mut g, &b, &cfg, a, bu).unwrap();
        let s = g.sum(o).unwrap();
        g.backward(s).unwrap();
        for (spec, &v) in layout(&cfg).iter().zip(b.vars()) {
            assert!(g.grad(v).is_some(), "{variant:?}: {} unused", spec.name);
        }
    }
}

#[test]
fn end_to_end_gradient_matches_finite_differences() {
    for seed in [0, 12, 29] {
        let e2e = EndToEnd::tiny(seed).unwrap();
        assert_eq!((e2e.cfg.width, e2e.cfg.head_width), (8, 4));
        let rep = e2e.check(0.01, seed, None).unwrap();
        assert!(rep.checked >= e2e.numel() / 100, "{rep:?}");
        assert!(rep.straddled * 10 <= rep.checked, "{rep:?}");
        assert!(
            rep.passes(END_TO_END_TOL),
            "seed {seed}: {rep:?} ({})",
            e2e.names[rep.worst.0]
        );
    }
}

#[test]
fn checkpoint_round_trip() {
    let cfg = tiny(Variant::V3);
    let store = ParamStore::<f64>::init(&cfg).unwrap();
    let ck = Checkpoint::new(
        cfg.clone(),
        &store,
        vec![],
        serde_json::json!({"note": "x"}),
        None,
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.u2ck");
    ck.save(&path).unwrap();
    let back = Checkpoint::<f64>::load(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.params().unwrap(), store);
    assert!(Checkpoint::<f32>::load(&path).is_err());
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(
        Checkpoint::<f64>::load(&path),
        Err(ModelError::Format { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn output_shape_for_any_valid_input(hq in 1usize..4, wq in 1usize..4, bands in 1usize..5, c in prop::sample::select(vec![1usize, 3]), vi in 0usize..5) {
        let variant = Variant::ALL[vi];
        let cfg = ModelConfig::new(c, bands, 4, 2).with_variant(variant);
        let store = ParamStore::<f32>::init(&cfg).unwrap();
        let a = ImageCube::constant(4 * hq, 4 * wq, c, 0.3).unwrap();
        let b = ImageCube::from_fn(hq, wq, bands, |y, x, k| ((y + x + k) % 3) as f32 / 3.0).unwrap();
        let o = u2net_forward(&a, &b, &store, &cfg).unwrap();
        prop_assert_eq!(o.dims(), (4 * hq, 4 * wq, bands));
    }

    #[test]
    fn attention_rows_are_stochastic(hw in 1usize..12, sp in 1usize..5, n in 1usize..3, seed in any::<u64>(), scale in 0.1f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::<f64>::new();
        let mut t = || { let x = rand_tensor(&[n, hw, sp], &mut rng); g.constant(&[n, hw, sp], x.data().iter().map(|v| v * scale).collect()).unwrap() };
        let (ta, tb, tc, td) = (t(), t(), t(), t());
        let cspa = spatial_self_correlation(&mut g, ta, tb).unwrap();
        let cspe = spectral_self_correlation(&mut g, tc, td).unwrap();
        for (c, cols) in [(cspa, hw), (cspe, sp)] {
            for row in g.value(c).chunks(cols) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
                prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
