use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{l1_loss, lr_at, Adam, AdamConfig, TrainConfig, TrainError};
use crate::data::SampleTriple;
use crate::model::{
    forward_graph, Checkpoint, ModelConfig, ModelError, NamedTensor, ParamStore, Prepared, RngState,
};
use crate::tensor::{Graph, Real, Tensor, TensorError};

pub const LOSS_CSV_HEADER: &str = "epoch,mean_loss,lr";

/// Network inputs and reference for one training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample<T> {
    pub id: String,
    pub input: Prepared<T>,
    pub target: Tensor<T>,
}

impl<T: Real> TrainSample<T> {
    pub fn new(triple: &SampleTriple, cfg: &ModelConfig) -> Result<Self, ModelError> {
        let x = triple
            .x
            .as_ref()
            .ok_or_else(|| ModelError::Config(format!("sample {} has no reference", triple.id)))?;
        let (h, w, c) = x.dims();
        if (h, w, c) != (triple.a.height(), triple.a.width(), cfg.bands) {
            return Err(ModelError::Config(format!(
                "reference {:?} does not match sample {}",
                x.dims(),
                triple.id
            )));
        }
        let data = x.data().iter().map(|&v| T::c(v as f64)).collect();
        Ok(TrainSample {
            id: triple.id.clone(),
            input: Prepared::new(&triple.a, &triple.b, cfg)?,
            target: Tensor::new(vec![1, h, w, c], data)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub history: Vec<EpochRecord>,
    pub best_loss: f64,
    pub steps: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainMeta {
    train: TrainConfig,
    next_epoch: usize,
    step: u64,
    adam_t: u64,
    best_loss: Option<f64>,
    history: Vec<EpochRecord>,
}

/// Loss and parameter gradients of one sample, with the loss scaled by `1/batch`.
fn sample_grads<T: Real>(
    params: &ParamStore<T>,
    cfg: &ModelConfig,
    s: &TrainSample<T>,
    batch: usize,
) -> Result<(f64, Vec<Vec<T>>), TrainError> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, true);
    let a = g.leaf(&s.input.a);
    let bu = g.leaf(&s.input.bu);
    let x = g.leaf(&s.target);
    let o = forward_graph(&mut g, &bound, cfg, a, bu)?;
    let l = l1_loss(&mut g, o, x)?;
    let l = if batch > 1 {
        g.scale(l, 1.0 / batch as f64)?
    } else {
        l
    };
    g.backward(l)?;
    let loss = g.value(l)[0].f64() * batch as f64;
    let grads = bound
        .vars()
        .iter()
        .zip(params.tensors())
        .map(|(&v, p)| {
            g.take_grad(v)
                .unwrap_or_else(|| vec![T::zero(); p.data.len()])
        })
        .collect();
    Ok((loss, grads))
}

/// Mean per-sample ℓ1 loss of `params` over `data`, without updating anything.
pub fn mean_loss<T: Real>(
    params: &ParamStore<T>,
    cfg: &ModelConfig,
    data: &[TrainSample<T>],
) -> Result<f64, TrainError> {
    let losses: Vec<f64> = data
        .par_iter()
        .map(|s| -> Result<f64, TrainError> {
            let mut g = Graph::new();
            let bound = params.bind(&mut g, false);
            let a = g.leaf(&s.input.a);
            let bu = g.leaf(&s.input.bu);
            let x = g.leaf(&s.target);
            let o = forward_graph(&mut g, &bound, cfg, a, bu)?;
            let l = l1_loss(&mut g, o, x)?;
            Ok(g.value(l)[0].f64())
        })
        .collect::<Result<_, _>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Owns parameters, optimizer state, and the shuffling stream.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub params: ParamStore<T>,
    pub adam: Adam<T>,
    rng: ChaCha8Rng,
    next_epoch: usize,
    step: u64,
    best_loss: Option<f64>,
    history: Vec<EpochRecord>,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: ModelConfig, train: TrainConfig) -> Result<Self, TrainError> {
        train.validate()?;
        let params = ParamStore::init(&model)?;
        let adam = Adam::new(
            AdamConfig {
                beta1: train.beta1,
                beta2: train.beta2,
                eps: train.eps,
            },
            &params,
        );
        Ok(Trainer {
            rng: ChaCha8Rng::seed_from_u64(train.seed),
            model,
            train,
            params,
            adam,
            next_epoch: 0,
            step: 0,
            best_loss: None,
            history: Vec::new(),
        })
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn next_epoch(&self) -> usize {
        self.next_epoch
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.best_loss
    }

    /// One pass over `data` in a freshly shuffled order.
    pub fn run_epoch(&mut self, data: &[TrainSample<T>]) -> Result<EpochRecord, TrainError> {
        if data.is_empty() {
            return Err(TrainError::Config("training set is empty".into()));
        }
        let epoch = self.next_epoch;
        let lr = lr_at(epoch, &self.train);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0f64;
        for batch in order.chunks(self.train.batch_size) {
            let n = batch.len();
            let results: Vec<(f64, Vec<Vec<T>>)> = batch
                .par_iter()
                .map(|&i| sample_grads(&self.params, &self.model, &data[i], n))
                .collect::<Result<_, _>>()
                .map_err(|e| match e {
                    TrainError::Tensor(TensorError::NonFinite { op })
                    | TrainError::Model(ModelError::Tensor(TensorError::NonFinite { op })) => {
                        TrainError::NonFinite {
                            what: "activation",
                            epoch,
                            step: self.step,
                            detail: format!("in {op}"),
                        }
                    }
                    e => e,
                })?;
            let mut iter = results.into_iter();
            let (mut loss, mut grads) = iter.next().expect("non-empty batch");
            for (l, g) in iter {
                loss += l;
                for (acc, gi) in grads.iter_mut().zip(g) {
                    acc.iter_mut().zip(gi).for_each(|(a, b)| *a += b);
                }
            }
            if !loss.is_finite() {
                return Err(TrainError::NonFinite {
                    what: "loss",
                    epoch,
                    step: self.step,
                    detail: format!("batch loss {loss}"),
                });
            }
            Adam::check_grads(&self.params, &grads).map_err(|detail| TrainError::NonFinite {
                what: "gradient",
                epoch,
                step: self.step,
                detail,
            })?;
            if let Some(max_norm) = self.train.clip_grad_norm {
                let norm = grads
                    .iter()
                    .flatten()
                    .map(|g| g.f64() * g.f64())
                    .sum::<f64>()
                    .sqrt();
                if norm > max_norm {
                    let f = T::c(max_norm / norm);
                    grads.iter_mut().flatten().for_each(|g| *g *= f);
                }
            }
            self.adam.step(&mut self.params, &grads, lr)?;
            self.step += 1;
            total += loss;
        }
        let rec = EpochRecord {
            epoch,
            mean_loss: total / data.len() as f64,
            lr,
        };
        self.next_epoch += 1;
        self.history.push(rec.clone());
        Ok(rec)
    }

    /// Trains through `train.epochs`, writing `last.u2ck`, `best.u2ck` and
    /// `loss.csv` under `out_dir` when given. On a non-finite abort, files from
    /// the last good epoch are left in place.
    pub fn fit(
        &mut self,
        data: &[TrainSample<T>],
        out_dir: Option<&Path>,
    ) -> Result<FitReport, TrainError> {
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir)?;
        }
        while self.next_epoch < self.train.epochs {
            let rec = self.run_epoch(data)?;
            let improved = self.best_loss.map_or(true, |b| rec.mean_loss < b);
            if improved {
                self.best_loss = Some(rec.mean_loss);
            }
            if let Some(dir) = out_dir {
                if improved {
                    self.checkpoint().save(dir.join("best.u2ck"))?;
                }
                let last = self.next_epoch == self.train.epochs;
                if last || self.next_epoch % self.train.checkpoint_every == 0 {
                    self.checkpoint().save(dir.join("last.u2ck"))?;
                    crate::data::fcube::write_atomic(
                        &dir.join("loss.csv"),
                        self.loss_csv().as_bytes(),
                    )
                    .map_err(|e| TrainError::Model(e.into()))?;
                }
            }
        }
        Ok(FitReport {
            history: self.history.clone(),
            best_loss: self.best_loss.unwrap_or(f64::NAN),
            steps: self.step,
        })
    }

    /// Loss history as CSV text.
    pub fn loss_csv(&self) -> String {
        let mut s = String::from(LOSS_CSV_HEADER);
        s.push('\n');
        for r in &self.history {
            let _ = writeln!(s, "{},{},{}", r.epoch, r.mean_loss, r.lr);
        }
        s
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        let mut extra = Vec::with_capacity(2 * self.params.len());
        for (key, bufs) in [("adam.m", &self.adam.m), ("adam.v", &self.adam.v)] {
            for (p, b) in self.params.tensors().iter().zip(bufs) {
                extra.push(NamedTensor {
                    name: format!("{key}/{}", p.spec.name),
                    shape: p.spec.shape.clone(),
                    data: b.clone(),
                });
            }
        }
        let meta = TrainMeta {
            train: self.train.clone(),
            next_epoch: self.next_epoch,
            step: self.step,
            adam_t: self.adam.t,
            best_loss: self.best_loss,
            history: self.history.clone(),
        };
        let meta = serde_json::to_value(meta).expect("training state serializes");
        Checkpoint::new(
            self.model.clone(),
            &self.params,
            extra,
            meta,
            Some(RngState::capture(&self.rng)),
        )
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`]. `epochs`
    /// may extend the stored schedule.
    pub fn resume(ckpt: &Checkpoint<T>, epochs: Option<usize>) -> Result<Self, TrainError> {
        let meta: TrainMeta = serde_json::from_value(ckpt.meta.clone())
            .map_err(|e| TrainError::Config(format!("checkpoint has no training state: {e}")))?;
        let params = ckpt.params()?;
        let fetch = |key: &str| -> Result<Vec<Vec<T>>, TrainError> {
            params
                .tensors()
                .iter()
                .map(|p| {
                    let name = format!("{key}/{}", p.spec.name);
                    let t = ckpt
                        .tensor(&name)
                        .ok_or_else(|| TrainError::Config(format!("checkpoint lacks {name}")))?;
                    if t.data.len() != p.data.len() {
                        return Err(TrainError::Config(format!("{name} has the wrong size")));
                    }
                    Ok(t.data.clone())
                })
                .collect()
        };
        let mut train = meta.train;
        if let Some(e) = epochs {
            train.epochs = e;
        }
        train.validate()?;
        let adam = Adam {
            cfg: AdamConfig {
                beta1: train.beta1,
                beta2: train.beta2,
                eps: train.eps,
            },
            t: meta.adam_t,
            m: fetch("adam.m")?,
            v: fetch("adam.v")?,
        };
        let rng = ckpt
            .rng
            .ok_or_else(|| TrainError::Config("checkpoint has no PRNG state".into()))?
            .restore();
        Ok(Trainer {
            model: ckpt.model.clone(),
            train,
            params,
            adam,
            rng,
            next_epoch: meta.next_epoch,
            step: meta.step,
            best_loss: meta.best_loss,
            history: meta.history,
        })
    }
}
