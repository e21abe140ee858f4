//! Run configuration: one JSON document covering every verb.

use std::path::{Path, PathBuf};

use fuselab_core::data::{DegradeConfig, Guide, Split, RATIO};
use fuselab_core::model::ModelConfig;
use fuselab_core::tensor::{DType, OpKind};
use fuselab_core::train::TrainConfig;
use fuselab_core::verify::Suite;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const RESOLVED_CONFIG: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    #[serde(default = "default_precision")]
    pub precision: DType,
    /// Directory every verb writes its outputs and resolved config into.
    pub out: PathBuf,
    /// Trained weights for `eval` and `infer`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Checkpoint to continue training from.
    #[serde(default)]
    pub resume: Option<PathBuf>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub infer: InferConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn default_precision() -> DType {
    DType::F32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory holding `manifest.json`, read by `train` and `eval`.
    pub dir: PathBuf,
    /// Scenes split between training and validation.
    pub scenes: usize,
    /// Extra scenes tagged `test`.
    #[serde(default)]
    pub test_scenes: usize,
    /// Test scenes keep their reference (reduced resolution) or drop it (full resolution).
    #[serde(default = "default_true")]
    pub test_reference: bool,
    pub scene_size: usize,
    pub patch: usize,
    pub stride: usize,
    /// Fractions of scenes assigned to training and validation; must sum to 1.
    pub split: SplitFractions,
    pub degrade: DegradeConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_eval_split")]
    pub split: Split,
    /// Replaces the network output with the reference, for checking the metric path.
    #[serde(default)]
    pub oracle: bool,
    /// Error mapped to white in AEM previews.
    #[serde(default = "default_aem_scale")]
    pub aem_scale: f32,
}

fn default_eval_split() -> Split {
    Split::Test
}

fn default_aem_scale() -> f32 {
    0.1
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { split: default_eval_split(), oracle: false, aem_scale: default_aem_scale() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferConfig {
    pub guide: Option<PathBuf>,
    pub lowres: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_suites")]
    pub suites: Vec<Suite>,
    /// Perturbs one op's backward rule; the gradient suite must then fail.
    #[serde(default)]
    pub inject_fault: Option<OpKind>,
}

fn default_suites() -> Vec<Suite> {
    Suite::ALL.to_vec()
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { suites: default_suites(), inject_fault: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Pansharpening: 8-band multispectral with a panchromatic guide.
    WvLike,
    /// Hyperspectral super-resolution with an RGB guide.
    CaveLike,
}

impl Preset {
    pub fn parse(s: &str) -> Option<Preset> {
        match s {
            "wv-like" => Some(Preset::WvLike),
            "cave-like" => Some(Preset::CaveLike),
            _ => None,
        }
    }

    pub fn config(self) -> RunConfig {
        let (model, train, degrade) = match self {
            Preset::WvLike => (
                ModelConfig::new(1, 8, 32, 16),
                TrainConfig::new(0.001, 360, 16, 100),
                DegradeConfig { guide: Guide::UniformPan, ..DegradeConfig::default() },
            ),
            Preset::CaveLike => (
                ModelConfig::new(3, 31, 64, 16),
                TrainConfig::new(0.0003, 500, 8, 50),
                DegradeConfig { guide: Guide::Rgb, ..DegradeConfig::default() },
            ),
        };
        RunConfig {
            model,
            train,
            data: DataConfig {
                dir: PathBuf::from("data"),
                scenes: 10,
                test_scenes: 2,
                test_reference: true,
                scene_size: 256,
                patch: 64,
                stride: 64,
                split: SplitFractions { train: 0.9, val: 0.1 },
                degrade,
                seed: 0,
            },
            precision: default_precision(),
            out: PathBuf::from("out"),
            checkpoint: None,
            resume: None,
            eval: EvalConfig::default(),
            infer: InferConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))
    }

    /// Sets every seed in the document.
    pub fn set_seed(&mut self, seed: u64) {
        self.model.seed = seed;
        self.train.seed = seed;
        self.data.seed = seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.train.validate()?;
        let d = &self.data;
        let SplitFractions { train, val } = d.split;
        if !(train >= 0.0 && val >= 0.0) || (train + val - 1.0).abs() > 1e-9 {
            return Err(CliError::validation(format!("split fractions {train} + {val} must be non-negative and sum to 1")));
        }
        if d.patch == 0 || d.patch % RATIO != 0 || d.stride == 0 || d.stride % RATIO != 0 {
            return Err(CliError::validation(format!(
                "patch {} and stride {} must be positive multiples of {RATIO}",
                d.patch, d.stride
            )));
        }
        if d.patch > d.scene_size {
            return Err(CliError::validation(format!("patch {} exceeds scene size {}", d.patch, d.scene_size)));
        }
        if d.degrade.guide.channels() != self.model.guide_channels {
            return Err(CliError::validation(format!(
                "degradation guide has {} channels, model expects {}",
                d.degrade.guide.channels(),
                self.model.guide_channels
            )));
        }
        if !(self.eval.aem_scale > 0.0) {
            return Err(CliError::validation("eval.aem_scale must be positive"));
        }
        if self.verify.inject_fault == Some(OpKind::Leaf) {
            return Err(CliError::validation("leaf has no backward rule to perturb"));
        }
        Ok(())
    }

    /// Writes the resolved document as `config.json` in `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        fuselab_core::data::fcube::write_atomic(&dir.join(RESOLVED_CONFIG), text.as_bytes())?;
        Ok(())
    }
}
