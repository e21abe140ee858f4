//! Command-line driver: `gen`, `train`, `eval`, `infer` and `verify` over a
//! single JSON run configuration.

pub mod commands;
pub mod config;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fuselab_core::data::Split;
use fuselab_core::metrics::{Report, ScoreRow};
use fuselab_core::model::Variant;
use fuselab_core::tensor::{DType, OpKind};
use fuselab_core::verify::Suite;
use serde::de::DeserializeOwned;

pub use config::{Preset, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "fuselab", version, about = "Spatial-spectral double U-Net image fusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize scenes and write a patch dataset with its manifest into --out.
    Gen(Common),
    /// Train on the dataset's training split.
    Train(Common),
    /// Score a checkpoint on one dataset split; writes reports and AEMs.
    Eval(Common),
    /// Fuse one guide / low-resolution pair.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Guide cube (FCUBE, H×W×c).
        guide: PathBuf,
        /// Low-resolution cube (FCUBE, H/4×W/4×C).
        lowres: PathBuf,
    },
    /// Run gradient, invariant and metric suites; writes verdict.json.
    Verify(Common),
}

/// Flags shared by every verb. Flags override the config document.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration: wv-like or cave-like. Default when --config is absent: wv-like.
    #[arg(long)]
    pub preset: Option<String>,
    /// Seed for model init, training order and data synthesis.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_enum::<Variant>)]
    pub variant: Option<Variant>,
    #[arg(long, value_parser = parse_enum::<DType>)]
    pub precision: Option<DType>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dataset directory read by train and eval.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Checkpoint read by eval and infer.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Checkpoint to continue training from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Number of training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Split scored by eval: train, val or test.
    #[arg(long, value_parser = parse_enum::<Split>)]
    pub split: Option<Split>,
    /// Score the reference in place of the network output.
    #[arg(long)]
    pub oracle: bool,
    /// Suites run by verify, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_enum::<Suite>)]
    pub suites: Option<Vec<Suite>>,
    /// Perturb the backward rule of one op kind.
    #[arg(long, value_parser = parse_enum::<OpKind>)]
    pub inject_fault: Option<OpKind>,
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

impl Common {
    /// Builds the run configuration from the document or preset, then applies flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => Preset::parse(name)
                .ok_or_else(|| CliError::validation(format!("unknown preset {name:?}, expected wv-like or cave-like")))?
                .config(),
            (None, None) => Preset::WvLike.config(),
        };
        if let Some(seed) = self.seed {
            cfg.set_seed(seed);
        }
        if let Some(v) = self.variant {
            cfg.model.variant = v;
        }
        if let Some(p) = self.precision {
            cfg.precision = p;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(dir) = &self.dataset {
            cfg.data.dir = dir.clone();
        }
        if let Some(c) = &self.checkpoint {
            cfg.checkpoint = Some(c.clone());
        }
        if let Some(r) = &self.resume {
            cfg.resume = Some(r.clone());
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(s) = self.split {
            cfg.eval.split = s;
        }
        cfg.eval.oracle |= self.oracle;
        if let Some(s) = &self.suites {
            cfg.verify.suites = s.clone();
        }
        if self.inject_fault.is_some() {
            cfg.verify.inject_fault = self.inject_fault;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_report<R: ScoreRow>(label: &str, r: &Report<R>) {
    println!("{label}, {} samples", r.rows.len());
    for (name, a) in R::SCORES.iter().zip(r.aggregates()) {
        println!("  {name:<8} mean {:.6} std {:.6}", a.mean, a.std);
    }
}

/// Executes one parsed command line, printing a short summary to stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(c) => {
            let cfg = c.resolve()?;
            let m = commands::gen(&cfg)?;
            let count = |s| m.split(s).count();
            println!(
                "wrote {} triples to {} (train {}, val {}, test {})",
                m.samples.len(),
                cfg.out.display(),
                count(Split::Train),
                count(Split::Val),
                count(Split::Test)
            );
        }
        Command::Train(c) => {
            let cfg = c.resolve()?;
            commands::train(&cfg)?;
            println!("checkpoints and loss.csv in {}", cfg.out.display());
        }
        Command::Eval(c) => {
            let cfg = c.resolve()?;
            let outcome = commands::eval(&cfg)?;
            if let Some(r) = &outcome.reduced {
                print_report("reduced resolution", r);
            }
            if let Some(r) = &outcome.full {
                print_report("full resolution", r);
            }
        }
        Command::Infer { common, guide, lowres } => {
            let mut cfg = common.resolve()?;
            cfg.infer.guide = Some(guide);
            cfg.infer.lowres = Some(lowres);
            let o = commands::infer(&cfg)?;
            let (h, w, c) = o.dims();
            println!("fused {h}x{w}x{c} into {}", cfg.out.display());
        }
        Command::Verify(c) => {
            let cfg = c.resolve()?;
            let verdict = commands::verify(&cfg)?;
            for s in &verdict.suites {
                println!("{} {} ({} cases, worst {:.3e})", if s.passed { "PASS" } else { "FAIL" }, s.name, s.cases.len(), s.worst());
                for f in s.failures() {
                    println!("    {} measured {:.3e} tol {:.1e} seed {} {}", f.name, f.measured, f.tolerance, f.seed, f.detail);
                }
                if !s.suspects.is_empty() {
                    let names: Vec<_> = s.suspects.iter().map(|k| k.name()).collect();
                    println!("    suspect ops: {}", names.join(", "));
                }
            }
            if !verdict.passed {
                return Err(CliError::runtime(format!(
                    "verification failed; see {}",
                    cfg.out.join(commands::VERDICT).display()
                )));
            }
        }
    }
    Ok(())
}
