use std::fs;
use std::path::{Path, PathBuf};

use fuselab_core::data::png::{write_error_map, write_preview};
use fuselab_core::data::{
    degrade_to_pair, extract_patches, read_cube, synth_scene, write_cube, DatasetManifest, ImageCube, ManifestEntry,
    SampleTriple, Split, RATIO,
};
use fuselab_core::metrics::{aem, qnr_suite, FullResReport, ReducedResReport, ReducedScores};
use fuselab_core::model::{peek_dtype, u2net_forward, Checkpoint, ModelConfig, ParamStore};
use fuselab_core::tensor::{DType, Real};
use fuselab_core::train::{TrainSample, Trainer};
use fuselab_core::verify::{self, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const VERDICT: &str = "verdict.json";

fn scene_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen()).collect()
}

/// Number of validation scenes for a fraction: rounded, and at least one
/// scene stays in training.
fn val_count(scenes: usize, val: f64) -> usize {
    ((scenes as f64 * val).round() as usize).min(scenes.saturating_sub(1))
}

/// Synthesizes scenes, degrades them, cuts patches and writes FCUBE files
/// plus `manifest.json` into `cfg.out`. Scenes, not patches, are assigned to
/// splits, so no scene content is shared between training and validation.
pub fn gen(cfg: &RunConfig) -> Result<DatasetManifest, CliError> {
    let d = &cfg.data;
    if d.scenes == 0 {
        return Err(CliError::validation("data.scenes must be at least 1"));
    }
    let out = &cfg.out;
    fs::create_dir_all(out.join("samples"))?;
    let total = d.scenes + d.test_scenes;
    let seeds = scene_seeds(d.seed, total);
    let n_val = val_count(d.scenes, d.split.val);
    let split_of = |i: usize| {
        if i >= d.scenes {
            Split::Test
        } else if i >= d.scenes - n_val {
            Split::Val
        } else {
            Split::Train
        }
    };
    let per_scene: Vec<Vec<(ManifestEntry, Option<ImageCube>)>> = (0..total)
        .into_par_iter()
        .map(|i| -> Result<_, CliError> {
            let split = split_of(i);
            let x = synth_scene(d.scene_size, d.scene_size, cfg.model.bands, seeds[i])?;
            let (a, b) = degrade_to_pair(&x, &d.degrade, seeds[i].wrapping_add(1))?;
            let keep_x = split != Split::Test || d.test_reference;
            let scene = SampleTriple::new(format!("scene{i:03}"), a, b, keep_x.then_some(x))?;
            extract_patches(&scene, d.patch, d.stride, None)?
                .into_iter()
                .map(|t| {
                    let id = t.id.replace('@', "-");
                    let file = |k: &str| format!("samples/{id}.{k}.fcube");
                    write_cube(&t.a, out.join(file("a")))?;
                    write_cube(&t.b, out.join(file("b")))?;
                    if let Some(x) = &t.x {
                        write_cube(x, out.join(file("x")))?;
                    }
                    let entry = ManifestEntry { id: id.clone(), split, a: file("a"), b: file("b"), x: t.x.as_ref().map(|_| file("x")) };
                    Ok((entry, (split == Split::Train).then_some(t.x).flatten()))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let mut sums = vec![0.0f64; cfg.model.bands];
    let mut count = 0usize;
    let mut samples = Vec::new();
    for (entry, x) in per_scene.into_iter().flatten() {
        if let Some(x) = x {
            for (s, m) in sums.iter_mut().zip(x.band_means()) {
                *s += m;
            }
            count += 1;
        }
        samples.push(entry);
    }
    let manifest = DatasetManifest {
        guide_channels: cfg.model.guide_channels,
        bands: cfg.model.bands,
        patch: d.patch,
        band_means: sums.iter().map(|s| s / count.max(1) as f64).collect(),
        samples,
    };
    manifest.save(out.join(MANIFEST))?;
    cfg.write_resolved(out)?;
    Ok(manifest)
}

/// Loads the dataset manifest and checks it against the model configuration.
pub fn load_manifest(dir: &Path, model: &ModelConfig) -> Result<DatasetManifest, CliError> {
    let path = dir.join(MANIFEST);
    if !path.is_file() {
        return Err(CliError::validation(format!("no dataset manifest at {}", path.display())));
    }
    let m = DatasetManifest::load(&path)?;
    if (m.guide_channels, m.bands) != (model.guide_channels, model.bands) {
        return Err(CliError::validation(format!(
            "dataset has c={}, C={} but the model expects c={}, C={}",
            m.guide_channels, m.bands, model.guide_channels, model.bands
        )));
    }
    Ok(m)
}

pub fn load_triple(dir: &Path, e: &ManifestEntry) -> Result<SampleTriple, CliError> {
    let x = e.x.as_ref().map(|p| read_cube(dir.join(p))).transpose()?;
    Ok(SampleTriple::new(e.id.clone(), read_cube(dir.join(&e.a))?, read_cube(dir.join(&e.b))?, x)?)
}

fn train_as<T: Real>(cfg: &RunConfig, data: &[SampleTriple]) -> Result<(), CliError> {
    let samples: Vec<TrainSample<T>> =
        data.iter().map(|t| TrainSample::new(t, &cfg.model)).collect::<Result<_, _>>()?;
    let mut trainer = match &cfg.resume {
        Some(path) => {
            let ckpt = Checkpoint::<T>::load(path)?;
            if ckpt.model != cfg.model {
                return Err(CliError::validation(format!(
                    "checkpoint {} was trained with a different model configuration",
                    path.display()
                )));
            }
            let t = Trainer::resume(&ckpt, Some(cfg.train.epochs))?;
            if t.train != cfg.train {
                return Err(CliError::validation(
                    "resumed training configuration differs from the run configuration beyond the epoch count",
                ));
            }
            t
        }
        None => Trainer::<T>::new(cfg.model.clone(), cfg.train.clone())?,
    };
    trainer.fit(&samples, Some(&cfg.out))?;
    Ok(())
}

/// Fits the model on the training split, writing `best.u2ck`, `last.u2ck` and
/// `loss.csv` into `cfg.out`.
pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let manifest = load_manifest(&cfg.data.dir, &cfg.model)?;
    let data: Vec<SampleTriple> = manifest
        .split(Split::Train)
        .map(|e| load_triple(&cfg.data.dir, e))
        .collect::<Result<_, _>>()?;
    if data.is_empty() {
        return Err(CliError::validation("training split is empty"));
    }
    if let Some(t) = data.iter().find(|t| t.x.is_none()) {
        return Err(CliError::validation(format!("training sample {} has no reference", t.id)));
    }
    cfg.write_resolved(&cfg.out)?;
    match cfg.precision {
        DType::F32 => train_as::<f32>(cfg, &data),
        DType::F64 => train_as::<f64>(cfg, &data),
    }
}

/// Network weights at the configured precision.
enum Weights {
    F32(ParamStore<f32>),
    F64(ParamStore<f64>),
}

impl Weights {
    fn load(path: &Path, cfg: &RunConfig) -> Result<Self, CliError> {
        let dtype = peek_dtype(path)?;
        if dtype != cfg.precision {
            return Err(CliError::validation(format!(
                "checkpoint {} stores {dtype:?} weights but precision is {:?}",
                path.display(),
                cfg.precision
            )));
        }
        fn check<T: Real>(path: &Path, cfg: &RunConfig) -> Result<ParamStore<T>, CliError> {
            let ckpt = Checkpoint::<T>::load(path)?;
            let diff = architecture_diff(&ckpt.model, &cfg.model);
            if !diff.is_empty() {
                return Err(CliError::validation(format!(
                    "checkpoint {} is incompatible with the configured model: {}",
                    path.display(),
                    diff.join(", ")
                )));
            }
            Ok(ckpt.params()?)
        }
        Ok(match dtype {
            DType::F32 => Weights::F32(check(path, cfg)?),
            DType::F64 => Weights::F64(check(path, cfg)?),
        })
    }

    fn forward(&self, a: &ImageCube, b: &ImageCube, cfg: &ModelConfig) -> Result<ImageCube, CliError> {
        Ok(match self {
            Weights::F32(p) => u2net_forward(a, b, p, cfg)?,
            Weights::F64(p) => u2net_forward(a, b, p, cfg)?,
        })
    }
}

/// Model fields that differ between a checkpoint and the configuration,
/// ignoring those that only affect initialization.
fn architecture_diff(ckpt: &ModelConfig, cfg: &ModelConfig) -> Vec<String> {
    let fields = |m: &ModelConfig| match serde_json::to_value(m).expect("config serializes") {
        serde_json::Value::Object(map) => map,
        _ => unreachable!("model config is a JSON object"),
    };
    let (a, b) = (fields(ckpt), fields(cfg));
    a.iter()
        .filter(|(k, v)| !matches!(k.as_str(), "seed" | "zero_head") && b.get(*k) != Some(v))
        .map(|(k, v)| format!("{k} is {v} in the checkpoint but {} in the config", b[k]))
        .collect()
}

fn required_checkpoint(cfg: &RunConfig) -> Result<&PathBuf, CliError> {
    cfg.checkpoint.as_ref().ok_or_else(|| CliError::validation("no checkpoint given (--checkpoint or \"checkpoint\")"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub reduced: Option<ReducedResReport>,
    pub full: Option<FullResReport>,
}

/// Scores the configured split. Samples with a reference get the
/// reduced-resolution indexes and an AEM; the rest get the no-reference suite.
pub fn eval(cfg: &RunConfig) -> Result<EvalOutcome, CliError> {
    let manifest = load_manifest(&cfg.data.dir, &cfg.model)?;
    let entries: Vec<&ManifestEntry> = manifest.split(cfg.eval.split).collect();
    if entries.is_empty() {
        return Err(CliError::validation(format!("split {:?} is empty", cfg.eval.split)));
    }
    let weights = if cfg.eval.oracle {
        if let Some(e) = entries.iter().find(|e| e.x.is_none()) {
            return Err(CliError::validation(format!("oracle output needs a reference, {} has none", e.id)));
        }
        None
    } else {
        Some(Weights::load(required_checkpoint(cfg)?, cfg)?)
    };
    fs::create_dir_all(cfg.out.join("aem"))?;
    cfg.write_resolved(&cfg.out)?;
    let mut reduced = Vec::new();
    let mut full = Vec::new();
    for e in entries {
        let t = load_triple(&cfg.data.dir, e)?;
        let o = match (&weights, &t.x) {
            (None, Some(x)) => x.clone(),
            (Some(w), _) => w.forward(&t.a, &t.b, &cfg.model)?,
            (None, None) => unreachable!("oracle runs are checked for references above"),
        };
        match &t.x {
            Some(x) => {
                reduced.push((t.id.clone(), ReducedScores::evaluate(&o, x, RATIO)?));
                let map = aem(&o, x)?;
                write_cube(&map, cfg.out.join(format!("aem/{}.fcube", t.id)))?;
                write_error_map(&map, cfg.eval.aem_scale, cfg.out.join(format!("aem/{}.png", t.id)))?;
            }
            None => full.push((t.id.clone(), qnr_suite(&o, &t.a, &t.b, RATIO)?)),
        }
    }
    let outcome = EvalOutcome {
        reduced: (!reduced.is_empty()).then(|| ReducedResReport::new(reduced)),
        full: (!full.is_empty()).then(|| FullResReport::new(full)),
    };
    if let Some(r) = &outcome.reduced {
        r.write(&cfg.out, "reduced")?;
    }
    if let Some(r) = &outcome.full {
        r.write(&cfg.out, "full")?;
    }
    Ok(outcome)
}

/// Three bands for an RGB-like preview: last, middle and first.
fn preview_bands(c: usize) -> Vec<usize> {
    match c {
        1 => vec![0],
        3 => vec![0, 1, 2],
        _ => vec![c - 1, c / 2, 0],
    }
}

/// One forward pass on the configured guide and low-resolution cubes, writing
/// `fused.fcube` and `fused.png` into `cfg.out`.
pub fn infer(cfg: &RunConfig) -> Result<ImageCube, CliError> {
    let (Some(ap), Some(bp)) = (&cfg.infer.guide, &cfg.infer.lowres) else {
        return Err(CliError::validation("infer needs a guide cube and a low-resolution cube"));
    };
    let weights = Weights::load(required_checkpoint(cfg)?, cfg)?;
    let (a, b) = (read_cube(ap)?, read_cube(bp)?);
    let o = weights.forward(&a, &b, &cfg.model)?;
    cfg.write_resolved(&cfg.out)?;
    write_cube(&o, cfg.out.join("fused.fcube"))?;
    write_preview(&o.select_bands(&preview_bands(o.bands()))?, cfg.out.join("fused.png"))?;
    Ok(o)
}

/// Runs the configured verification suites and writes `verdict.json`.
pub fn verify(cfg: &RunConfig) -> Result<Verdict, CliError> {
    let verdict = verify::run(&cfg.verify.suites, cfg.model.seed, cfg.verify.inject_fault);
    cfg.write_resolved(&cfg.out)?;
    let text = serde_json::to_string_pretty(&verdict).expect("verdict serializes");
    fuselab_core::data::fcube::write_atomic(&cfg.out.join(VERDICT), text.as_bytes())?;
    Ok(verdict)
}
