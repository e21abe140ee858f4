//! Per-sample score tables with aggregate rows, emitted as CSV and JSON.
//!
//! Aggregates are the mean and population standard deviation (divisor `n`) of
//! the per-sample values. An infinite PSNR propagates to the mean; its spread is
//! 0 when every sample is infinite and `inf` otherwise. Non-finite numbers are
//! written as the strings `"inf"`, `"-inf"`, `"nan"` in JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::full::FullScores;
use super::quality::{q2n, Q2N_BLOCK};
use super::reduced::{ergas, psnr, sam, ssim};
use super::{peak_value, MetricError};
use crate::data::fcube::write_atomic;
use crate::data::ImageCube;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedScores {
    pub psnr: f64,
    pub q2n: f64,
    pub sam: f64,
    pub ergas: f64,
    pub ssim: f64,
    pub sam_excluded: usize,
    pub q2n_skipped: usize,
}

impl ReducedScores {
    /// All reference-based indexes of `o` against `x`. Q2ⁿ blocks are
    /// `min(32, H, W)` on a side.
    pub fn evaluate(o: &ImageCube, x: &ImageCube, ratio: usize) -> Result<Self, MetricError> {
        let peak = peak_value(x);
        let block = Q2N_BLOCK.min(x.height()).min(x.width());
        let q = q2n(o, x, block, block)?;
        let s = sam(o, x)?;
        Ok(ReducedScores {
            psnr: psnr(o, x, peak)?,
            q2n: q.value,
            sam: s.degrees,
            ergas: ergas(o, x, ratio)?,
            ssim: ssim(o, x, peak)?,
            sam_excluded: s.excluded,
            q2n_skipped: q.skipped,
        })
    }
}

/// A row type with named score and count columns.
pub trait ScoreRow {
    const SCORES: &'static [&'static str];
    const COUNTS: &'static [&'static str];
    fn scores(&self) -> Vec<f64>;
    fn counts(&self) -> Vec<usize>;
}

impl ScoreRow for ReducedScores {
    const SCORES: &'static [&'static str] = &["psnr", "q2n", "sam", "ergas", "ssim"];
    const COUNTS: &'static [&'static str] = &["sam_excluded", "q2n_skipped"];
    fn scores(&self) -> Vec<f64> {
        vec![self.psnr, self.q2n, self.sam, self.ergas, self.ssim]
    }
    fn counts(&self) -> Vec<usize> {
        vec![self.sam_excluded, self.q2n_skipped]
    }
}

impl ScoreRow for FullScores {
    const SCORES: &'static [&'static str] = &["d_lambda", "d_s", "qnr"];
    const COUNTS: &'static [&'static str] = &["skipped_blocks"];
    fn scores(&self) -> Vec<f64> {
        vec![self.d_lambda, self.d_s, self.qnr]
    }
    fn counts(&self) -> Vec<usize> {
        vec![self.skipped_blocks]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Aggregate {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if mean.is_finite() {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
        } else if values.iter().all(|&v| v == values[0]) {
            0.0
        } else {
            f64::INFINITY
        };
        Aggregate { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report<R> {
    pub rows: Vec<(String, R)>,
}

pub type ReducedResReport = Report<ReducedScores>;
pub type FullResReport = Report<FullScores>;

fn json_number(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(format!("{v}").to_lowercase())
    }
}

impl<R: ScoreRow> Report<R> {
    pub fn new(rows: Vec<(String, R)>) -> Self {
        Report { rows }
    }

    /// One aggregate per score column, in column order.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        (0..R::SCORES.len())
            .map(|k| {
                Aggregate::of(
                    &self
                        .rows
                        .iter()
                        .map(|(_, r)| r.scores()[k])
                        .collect::<Vec<_>>(),
                )
            })
            .collect()
    }

    /// Header, one row per sample, then `mean` and `std` rows with empty count cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id");
        for name in R::SCORES.iter().chain(R::COUNTS) {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (id, r) in &self.rows {
            out.push_str(id);
            for v in r.scores() {
                out.push_str(&format!(",{v}"));
            }
            for n in r.counts() {
                out.push_str(&format!(",{n}"));
            }
            out.push('\n');
        }
        let aggs = self.aggregates();
        for (label, pick) in [("mean", true), ("std", false)] {
            out.push_str(label);
            for a in &aggs {
                out.push_str(&format!(",{}", if pick { a.mean } else { a.std }));
            }
            out.push_str(&",".repeat(R::COUNTS.len()));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|(id, r)| {
                let mut m = Map::new();
                m.insert("id".into(), json!(id));
                for (name, v) in R::SCORES.iter().zip(r.scores()) {
                    m.insert((*name).into(), json_number(v));
                }
                for (name, n) in R::COUNTS.iter().zip(r.counts()) {
                    m.insert((*name).into(), json!(n));
                }
                Value::Object(m)
            })
            .collect();
        let aggs = self.aggregates();
        let column = |f: fn(&Aggregate) -> f64| -> Value {
            Value::Object(
                R::SCORES
                    .iter()
                    .zip(&aggs)
                    .map(|(n, a)| ((*n).to_string(), json_number(f(a))))
                    .collect(),
            )
        };
        json!({ "samples": rows, "mean": column(|a| a.mean), "std": column(|a| a.std) })
    }

    /// Writes `{stem}.csv` and `{stem}.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), MetricError> {
        write_atomic(&dir.join(format!("{stem}.csv")), self.to_csv().as_bytes())?;
        let json = serde_json::to_vec_pretty(&self.to_json()).expect("report JSON is serializable");
        write_atomic(&dir.join(format!("{stem}.json")), &json)?;
        Ok(())
    }
}
