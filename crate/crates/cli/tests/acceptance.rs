//! Acceptance gates 1–9. Prints one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines reach the terminal in order.
//! The process fails when a criterion fails that is not listed in
//! `KNOWN_FAILURES`, or when a listed one starts passing, so the list cannot
//! go stale. Known failures still print FAIL with their measured values.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use fuselab_cli::{Preset, RunConfig};
use fuselab_core::data::{DegradeConfig, SampleTriple};
use fuselab_core::metrics::psnr;
use fuselab_core::model::{u2net_forward, ModelConfig, ParamStore, Variant};
use fuselab_core::train::{mean_loss, TrainConfig, TrainSample, Trainer};
use fuselab_core::verify::{Suite, SuiteResult};
use tempfile::TempDir;

/// Criteria that fail on this implementation; the analysis is in the README.
const KNOWN_FAILURES: &[u32] = &[5, 8];

const SEED: u64 = 0;
const OVERFIT_STEPS: usize = 500;

struct Outcome {
    criterion: u32,
    passed: bool,
    detail: String,
    elapsed: Duration,
}

fn timed(criterion: u32, title: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (passed, detail) = f();
    let elapsed = start.elapsed();
    let o = Outcome { criterion, passed, detail, elapsed };
    let tag = match (o.passed, KNOWN_FAILURES.contains(&criterion)) {
        (true, _) => "PASS",
        (false, true) => "FAIL (known)",
        (false, false) => "FAIL",
    };
    println!("criterion {criterion} {tag:<12} {title}: {} [{:.1} s]", o.detail, elapsed.as_secs_f64());
    o
}

fn suite_detail(s: &SuiteResult) -> String {
    let failing: Vec<String> =
        s.failures().map(|c| format!("{} {:.3e} > {:.1e} (seed {})", c.name, c.measured, c.tolerance, c.seed)).collect();
    if failing.is_empty() && s.cases.len() <= 3 {
        let cases: Vec<String> =
            s.cases.iter().map(|c| format!("{} {:.3e} <= {:.1e} ({})", c.name, c.measured, c.tolerance, c.detail)).collect();
        cases.join("; ")
    } else if failing.is_empty() {
        format!("{} cases, worst {:.3e}", s.cases.len(), s.worst())
    } else {
        format!("{} of {} cases failed: {}", failing.len(), s.cases.len(), failing.join("; "))
    }
}

fn gradient_fidelity() -> (bool, String) {
    let start = Instant::now();
    let s = Suite::Gradients.run(SEED, None);
    let secs = start.elapsed().as_secs_f64();
    let worst = |e2e: bool| {
        s.cases.iter().filter(|c| (c.name == "end_to_end") == e2e).map(|c| c.measured).fold(0.0, f64::max)
    };
    let within_budget = secs < 120.0;
    (
        s.passed && within_budget,
        format!(
            "primitives worst {:.2e} (tol 1e-4), end-to-end worst {:.2e} (tol 1e-3), runtime {secs:.1} s (budget 120 s){}",
            worst(false),
            worst(true),
            if s.passed { String::new() } else { format!("; {}", suite_detail(&s)) }
        ),
    )
}

fn suite_gate(suite: Suite) -> (bool, String) {
    let s = suite.run(SEED, None);
    (s.passed, suite_detail(&s))
}

fn parameter_class() -> (bool, String) {
    let s = Suite::Parameters.run(SEED, None);
    let n = s.cases.iter().find(|c| c.name == "heavyweight").map_or(0.0, |c| c.measured);
    (s.passed, format!("{n} parameters (need >= 5e5), seed invariant: {}", s.cases.iter().all(|c| c.passed)))
}

/// Eight 32×32 triples, 4 bands, panchromatic guide.
fn overfit_data() -> Vec<SampleTriple> {
    (0..8)
        .map(|i| SampleTriple::synthesize(format!("s{i}"), 32, 4, &DegradeConfig::default(), i).expect("synthetic triple"))
        .collect()
}

fn overfit_model(variant: Variant) -> ModelConfig {
    ModelConfig::new(1, 4, 16, 8).with_variant(variant).with_seed(SEED)
}

/// Full-batch Adam at constant lr, one step per epoch.
fn overfit_train() -> TrainConfig {
    let mut t = TrainConfig::new(1e-3, OVERFIT_STEPS, 8, OVERFIT_STEPS);
    t.seed = SEED;
    t
}

struct OverfitRun {
    initial: f64,
    last: f64,
    params: ParamStore<f32>,
}

fn overfit(variant: Variant, triples: &[SampleTriple]) -> Result<OverfitRun, String> {
    let cfg = overfit_model(variant);
    let data: Vec<TrainSample<f32>> =
        triples.iter().map(|t| TrainSample::new(t, &cfg)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let mut trainer = Trainer::<f32>::new(cfg.clone(), overfit_train()).map_err(|e| e.to_string())?;
    let initial = mean_loss(&trainer.params, &cfg, &data).map_err(|e| e.to_string())?;
    trainer.fit(&data, None).map_err(|e| e.to_string())?;
    let last = mean_loss(&trainer.params, &cfg, &data).map_err(|e| e.to_string())?;
    Ok(OverfitRun { initial, last, params: trainer.params })
}

fn mean_psnr(params: &ParamStore<f32>, cfg: &ModelConfig, triples: &[SampleTriple]) -> Result<f64, String> {
    let mut total = 0.0;
    for t in triples {
        let o = u2net_forward(&t.a, &t.b, params, cfg).map_err(|e| e.to_string())?;
        total += psnr(&o, t.x.as_ref().expect("reference"), 1.0).map_err(|e| e.to_string())?;
    }
    Ok(total / triples.len() as f64)
}

fn overfit_gate(full: &Result<OverfitRun, String>, triples: &[SampleTriple], start: Instant) -> (bool, String) {
    let run = match full {
        Ok(r) => r,
        Err(e) => return (false, format!("training failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let ratio = run.initial / run.last;
    let db = match mean_psnr(&run.params, &overfit_model(Variant::Full), triples) {
        Ok(db) => db,
        Err(e) => return (false, format!("evaluation failed: {e}")),
    };
    let ok = ratio >= 100.0 && db >= 35.0 && secs <= 600.0;
    (
        ok,
        format!(
            "loss {:.4} -> {:.4} after {OVERFIT_STEPS} steps, reduction {ratio:.2}x (need >= 100x), PSNR {db:.2} dB (need >= 35), runtime {secs:.0} s (budget 600 s)",
            run.initial, run.last
        ),
    )
}

fn ablation_gate(full: &Result<OverfitRun, String>, triples: &[SampleTriple]) -> (bool, String) {
    let mut notes = Vec::new();
    let mut ok = true;
    for v in Variant::ALL {
        let cfg = overfit_model(v);
        let one_epoch = || -> Result<(), String> {
            let data: Vec<TrainSample<f32>> =
                triples.iter().map(|t| TrainSample::new(t, &cfg)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
            let mut train = overfit_train();
            train.epochs = 1;
            let mut trainer = Trainer::<f32>::new(cfg.clone(), train).map_err(|e| e.to_string())?;
            let rec = trainer.run_epoch(&data).map_err(|e| e.to_string())?;
            if !rec.mean_loss.is_finite() {
                return Err(format!("loss {}", rec.mean_loss));
            }
            let t = &triples[0];
            let o = u2net_forward(&t.a, &t.b, &trainer.params, &cfg).map_err(|e| e.to_string())?;
            if o.dims() != (32, 32, 4) {
                return Err(format!("output {:?}", o.dims()));
            }
            Ok(())
        };
        if let Err(e) = one_epoch() {
            ok = false;
            notes.push(format!("{} failed: {e}", v.name()));
        }
    }
    if ok {
        notes.push("all five variants train one epoch with 32x32x4 outputs".into());
    }
    let v2 = overfit(Variant::V2, triples);
    match (full, &v2) {
        (Ok(f), Ok(c)) => {
            let directional = f.last <= c.last * 1.05;
            ok &= directional;
            notes.push(format!(
                "final loss after {OVERFIT_STEPS} steps: full {:.4} vs v2 {:.4} (need full <= 1.05 * v2 = {:.4})",
                f.last,
                c.last,
                c.last * 1.05
            ));
        }
        (Err(e), _) | (_, Err(e)) => {
            ok = false;
            notes.push(format!("overfit run failed: {e}"));
        }
    }
    (ok, notes.join("; "))
}

fn fuselab(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fuselab")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn determinism_gate() -> (bool, String) {
    let run = || -> Result<(bool, String), String> {
        let tmp = TempDir::new().map_err(|e| e.to_string())?;
        let root = tmp.path();
        let mut cfg: RunConfig = Preset::WvLike.config();
        cfg.model = ModelConfig::new(1, 4, 8, 4);
        cfg.train = TrainConfig::new(1e-3, 3, 4, 2);
        cfg.data.scenes = 2;
        cfg.data.test_scenes = 0;
        cfg.data.scene_size = 32;
        cfg.data.patch = 16;
        cfg.data.stride = 16;
        cfg.data.split.train = 0.5;
        cfg.data.split.val = 0.5;
        cfg.data.dir = root.join("data");
        cfg.set_seed(7);
        let path = root.join("cfg.json");
        fs::write(&path, serde_json::to_string_pretty(&cfg).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let p = path.to_str().unwrap();
        let dir = |d: &str| root.join(d).to_str().unwrap().to_owned();
        fuselab(&["gen", "--config", p, "--out", &dir("data")])?;
        fuselab(&["train", "--config", p, "--out", &dir("a")])?;
        fuselab(&["train", "--config", p, "--out", &dir("b")])?;
        let mut diffs = Vec::new();
        for f in ["best.u2ck", "last.u2ck", "loss.csv"] {
            let read = |d: &str| fs::read(Path::new(&dir(d)).join(f)).map_err(|e| format!("{f}: {e}"));
            if read("a")? != read("b")? {
                diffs.push(f);
            }
        }
        Ok(if diffs.is_empty() {
            (true, "two train runs gave identical best.u2ck, last.u2ck and loss.csv".into())
        } else {
            (false, format!("files differ: {}", diffs.join(", ")))
        })
    };
    run().unwrap_or_else(|e| (false, e))
}

fn main() -> ExitCode {
    let mut outcomes = vec![
        timed(1, "gradient fidelity", gradient_fidelity),
        timed(2, "attention invariants", || suite_gate(Suite::Attention)),
        timed(3, "residual identity", || suite_gate(Suite::Residual)),
        timed(4, "SSIO loop oracle", || suite_gate(Suite::Ssio)),
    ];
    let triples = overfit_data();
    let mut full = Err("not run".to_owned());
    outcomes.push(timed(5, "overfit gate", || {
        let start = Instant::now();
        full = overfit(Variant::Full, &triples);
        overfit_gate(&full, &triples, start)
    }));
    outcomes.push(timed(6, "metric oracles", || suite_gate(Suite::Metrics)));
    outcomes.push(timed(7, "parameter class", parameter_class));
    outcomes.push(timed(8, "ablation suite", || ablation_gate(&full, &triples)));
    outcomes.push(timed(9, "training determinism", determinism_gate));

    let passed = outcomes.iter().filter(|o| o.passed).count();
    let unexpected: Vec<u32> =
        outcomes.iter().filter(|o| !o.passed && !KNOWN_FAILURES.contains(&o.criterion)).map(|o| o.criterion).collect();
    let stale: Vec<u32> =
        outcomes.iter().filter(|o| o.passed && KNOWN_FAILURES.contains(&o.criterion)).map(|o| o.criterion).collect();
    let total: f64 = outcomes.iter().map(|o| o.elapsed.as_secs_f64()).sum();
    println!("acceptance: {passed}/{} criteria pass, known failures {KNOWN_FAILURES:?}, {total:.0} s", outcomes.len());
    if !unexpected.is_empty() {
        println!("acceptance: unexpected failures {unexpected:?}");
    }
    if !stale.is_empty() {
        println!("acceptance: criteria {stale:?} now pass; remove them from KNOWN_FAILURES");
    }
    if unexpected.is_empty() && stale.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
