use fuselab_core::data::{upsample_lowres, DegradeConfig, SampleTriple};
use fuselab_core::model::{
    Checkpoint, ModelConfig, ParamInit, ParamSpec, ParamStore, ParamTensor, Variant,
};
use fuselab_core::tensor::{Graph, Tensor};
use fuselab_core::train::{
    l1_loss, lr_at, mean_loss, Adam, AdamConfig, TrainConfig, TrainError, TrainSample, Trainer,
    LOSS_CSV_HEADER,
};
use proptest::prelude::*;

fn tiny(variant: Variant) -> ModelConfig {
    ModelConfig::new(1, 4, 8, 4)
        .with_variant(variant)
        .with_seed(5)
}

fn dataset(n: usize, cfg: &ModelConfig) -> Vec<TrainSample<f32>> {
    (0..n as u64)
        .map(|k| {
            let t = SampleTriple::synthesize(
                format!("s{k}"),
                16,
                cfg.bands,
                &DegradeConfig::default(),
                40 + k,
            )
            .unwrap();
            TrainSample::new(&t, cfg).unwrap()
        })
        .collect()
}

fn l1_value(a: &[f64], b: &[f64], shape: &[usize]) -> f64 {
    let mut g = Graph::<f64>::new();
    let va = g.leaf(&Tensor::new(shape.to_vec(), a.to_vec()).unwrap());
    let vb = g.leaf(&Tensor::new(shape.to_vec(), b.to_vec()).unwrap());
    let l = l1_loss(&mut g, va, vb).unwrap();
    g.value(l)[0]
}

fn store(entries: &[(&str, Vec<f64>)]) -> ParamStore<f64> {
    ParamStore::from_parts(
        entries
            .iter()
            .map(|(name, data)| ParamTensor {
                spec: ParamSpec {
                    name: (*name).into(),
                    shape: vec![data.len()],
                    init: ParamInit::Zeros,
                },
                data: data.clone(),
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn l1_examples() {
    assert_eq!(l1_value(&[0.3, -1.0], &[0.3, -1.0], &[1, 2]), 0.0);
    assert_eq!(l1_value(&[1.0, 2.0], &[2.0, 4.0], &[1, 2]), 3.0);
    // mean over the leading batch axis of per-sample ℓ1 norms
    assert_eq!(
        l1_value(&[1.0, 2.0, 0.0, 0.0], &[2.0, 4.0, 0.0, 1.0], &[2, 2]),
        2.0
    );
    let mut g = Graph::<f64>::new();
    let a = g.leaf(&Tensor::zeros(&[1, 2]));
    let b = g.leaf(&Tensor::zeros(&[1, 3]));
    assert!(l1_loss(&mut g, a, b).is_err());
}

#[test]
fn adam_first_step_closed_form() {
    let mut p = store(&[("w", vec![0.5])]);
    let mut adam = Adam::new(AdamConfig::default(), &p);
    adam.step(&mut p, &[vec![1.0]], 0.001).unwrap();
    let delta = p.get("w").unwrap().data[0] - 0.5;
    assert!((delta - (-0.001 / (1.0 + 1e-8))).abs() < 1e-15, "{delta}");
    assert!((delta + 0.000999).abs() < 1e-6);
    assert_eq!(adam.t, 1);
}

#[test]
fn adam_zero_gradient_leaves_params() {
    let mut p = store(&[("a", vec![0.1, -0.2]), ("b", vec![3.0])]);
    let before = p.clone();
    let mut adam = Adam::new(AdamConfig::default(), &p);
    for _ in 0..5 {
        adam.step(&mut p, &[vec![0.0, 0.0], vec![0.0]], 0.01)
            .unwrap();
    }
    assert_eq!(p, before);
}

#[test]
fn adam_rejects_non_finite_gradients() {
    let mut p = store(&[("a", vec![0.1, -0.2])]);
    let mut adam = Adam::new(AdamConfig::default(), &p);
    let err = adam.step(&mut p, &[vec![0.0, f64::NAN]], 0.01).unwrap_err();
    assert!(matches!(err, TrainError::NonFinite { .. }));
    assert!(err.to_string().contains("a[1]"), "{err}");
}

#[test]
fn adam_is_invariant_to_registration_order() {
    let grads = |k: usize| (vec![0.3 * k as f64 - 0.5, 0.1], vec![(k as f64).sin()]);
    let mut fwd = store(&[("a", vec![0.1, -0.2]), ("b", vec![3.0])]);
    let mut rev = store(&[("b", vec![3.0]), ("a", vec![0.1, -0.2])]);
    let (mut af, mut ar) = (
        Adam::new(AdamConfig::default(), &fwd),
        Adam::new(AdamConfig::default(), &rev),
    );
    for k in 0..20 {
        let (ga, gb) = grads(k);
        af.step(&mut fwd, &[ga.clone(), gb.clone()], 0.01).unwrap();
        ar.step(&mut rev, &[gb, ga], 0.01).unwrap();
    }
    for name in ["a", "b"] {
        assert_eq!(fwd.get(name).unwrap().data, rev.get(name).unwrap().data);
    }
}

#[test]
fn lr_schedule_examples() {
    let cfg = TrainConfig::new(0.001, 360, 16, 100);
    assert_eq!(lr_at(0, &cfg), 0.001);
    assert_eq!(lr_at(99, &cfg), 0.001);
    assert_eq!(lr_at(250, &cfg), 0.00025);
    let hisr = TrainConfig::new(0.0003, 500, 8, 50);
    assert_eq!(lr_at(50, &hisr), 0.00015);
}

#[test]
fn train_config_validation() {
    let ok = TrainConfig::new(0.001, 1, 1, 1);
    assert!(ok.validate().is_ok());
    for bad in [
        TrainConfig {
            lr0: 0.0,
            ..ok.clone()
        },
        TrainConfig {
            beta1: 1.0,
            ..ok.clone()
        },
        TrainConfig {
            beta2: -0.1,
            ..ok.clone()
        },
        TrainConfig {
            batch_size: 0,
            ..ok.clone()
        },
    ] {
        assert!(
            matches!(bad.validate(), Err(TrainError::Config(_))),
            "{bad:?}"
        );
    }
    let json = r#"{"lr0": 0.001, "epochs": 1, "batch_size": 1, "halve_every": 1, "momentum": 0.9}"#;
    assert!(serde_json::from_str::<TrainConfig>(json).is_err());
}

#[test]
fn zero_head_first_loss_is_the_upsampled_baseline() {
    let mut cfg = tiny(Variant::Full);
    cfg.zero_head = true;
    let triples: Vec<SampleTriple> = (0..3)
        .map(|k| {
            SampleTriple::synthesize(format!("s{k}"), 16, 4, &DegradeConfig::default(), 70 + k)
                .unwrap()
        })
        .collect();
    let data: Vec<TrainSample<f32>> = triples
        .iter()
        .map(|t| TrainSample::new(t, &cfg).unwrap())
        .collect();
    let baseline: f64 = triples
        .iter()
        .map(|t| {
            let bu = upsample_lowres(&t.b, 4, cfg.upsampler).unwrap();
            bu.data()
                .iter()
                .zip(t.x.as_ref().unwrap().data())
                .map(|(&p, &q)| (p as f64 - q as f64).abs())
                .sum::<f64>()
        })
        .sum::<f64>()
        / 3.0;
    let mut trainer = Trainer::<f32>::new(cfg, TrainConfig::new(0.001, 1, 3, 100)).unwrap();
    let rec = trainer.run_epoch(&data).unwrap();
    assert!(
        (rec.mean_loss - baseline).abs() <= 1e-5 * baseline,
        "{} vs {baseline}",
        rec.mean_loss
    );
}

#[test]
fn vanishing_learning_rate_keeps_loss_constant() {
    let cfg = tiny(Variant::Full);
    let data = dataset(2, &cfg);
    let mut trainer = Trainer::<f32>::new(cfg, TrainConfig::new(1e-30, 4, 2, 100)).unwrap();
    let losses: Vec<f64> = (0..4)
        .map(|_| trainer.run_epoch(&data).unwrap().mean_loss)
        .collect();
    assert!(losses.windows(2).all(|w| w[0] == w[1]), "{losses:?}");
}

#[test]
fn training_reduces_loss_and_is_reproducible() {
    let cfg = tiny(Variant::Full);
    let data = dataset(4, &cfg);
    let run = || {
        let mut t = Trainer::<f32>::new(cfg.clone(), TrainConfig::new(0.003, 6, 2, 100)).unwrap();
        let report = t.fit(&data, None).unwrap();
        (report, t.params.clone(), t.loss_csv())
    };
    let (r1, p1, csv1) = run();
    let (r2, p2, csv2) = run();
    assert_eq!(p1, p2);
    assert_eq!(csv1, csv2);
    assert_eq!(r1, r2);
    assert_eq!(r1.steps, 12);
    let first = mean_loss(&ParamStore::<f32>::init(&cfg).unwrap(), &cfg, &data).unwrap();
    let last = mean_loss(&p1, &cfg, &data).unwrap();
    assert!(last < first, "{last} !< {first}");
}

#[test]
fn resume_reproduces_uninterrupted_trajectory() {
    let cfg = tiny(Variant::V3);
    let data = dataset(3, &cfg);
    let mut train = TrainConfig::new(0.002, 4, 2, 2);
    train.seed = 9;
    let mut whole = Trainer::<f32>::new(cfg.clone(), train.clone()).unwrap();
    whole.fit(&data, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut first = Trainer::<f32>::new(cfg, TrainConfig { epochs: 2, ..train }).unwrap();
    first.fit(&data, Some(dir.path())).unwrap();
    let ckpt = Checkpoint::<f32>::load(dir.path().join("last.u2ck")).unwrap();
    let mut resumed = Trainer::resume(&ckpt, Some(4)).unwrap();
    resumed.fit(&data, None).unwrap();

    assert_eq!(resumed.params, whole.params);
    assert_eq!(resumed.adam, whole.adam);
    assert_eq!(resumed.history(), whole.history());
    assert_eq!(resumed.loss_csv(), whole.loss_csv());
    assert_eq!(
        resumed.checkpoint().encode().unwrap(),
        whole.checkpoint().encode().unwrap()
    );
}

#[test]
fn fit_writes_history_and_checkpoints() {
    let cfg = tiny(Variant::V2);
    let data = dataset(2, &cfg);
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::<f32>::new(cfg, TrainConfig::new(0.001, 3, 1, 2)).unwrap();
    t.fit(&data, Some(dir.path())).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], LOSS_CSV_HEADER);
    assert_eq!(lines.len(), 4);
    assert!(
        lines[3].starts_with("2,") && lines[3].ends_with(",0.0005"),
        "{}",
        lines[3]
    );
    let best = Checkpoint::<f32>::load(dir.path().join("best.u2ck")).unwrap();
    assert_eq!(best.model, t.model);
}

#[test]
fn non_finite_abort_keeps_last_good_checkpoint() {
    let cfg = tiny(Variant::Full);
    let data = dataset(2, &cfg);
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::<f32>::new(cfg, TrainConfig::new(0.001, 1, 2, 100)).unwrap();
    t.fit(&data, Some(dir.path())).unwrap();
    let good = std::fs::read(dir.path().join("last.u2ck")).unwrap();
    t.train.lr0 = 1e38;
    t.train.epochs = 6;
    let err = t.fit(&data, Some(dir.path())).unwrap_err();
    assert!(matches!(err, TrainError::NonFinite { .. }), "{err}");
    let failed_epoch = t.next_epoch();
    let ckpt = Checkpoint::<f32>::load(dir.path().join("last.u2ck")).unwrap();
    let resumed = Trainer::resume(&ckpt, None).unwrap();
    assert_eq!(resumed.next_epoch(), failed_epoch);
    assert!(resumed.history().iter().all(|r| r.mean_loss.is_finite()));
    assert!(ckpt.params().unwrap().is_finite());
    let csv = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), failed_epoch + 1);
    assert!(std::fs::read(dir.path().join("last.u2ck")).unwrap() != good || failed_epoch == 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn l1_is_nonnegative_symmetric_and_zero_iff_equal(
        a in prop::collection::vec(-5.0f64..5.0, 1..12),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|v| if rng.gen_bool(0.3) { *v } else { v + rng.gen_range(-1.0..1.0) }).collect();
        let shape = [1, a.len()];
        let ab = l1_value(&a, &b, &shape);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, l1_value(&b, &a, &shape));
        prop_assert_eq!(ab == 0.0, a == b);
    }
}
