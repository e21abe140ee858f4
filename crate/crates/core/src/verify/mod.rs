//! Self-verification suites: gradient checks, attention and residual
//! invariants, and metric oracles, with a machine-readable verdict.
//!
//! Each case records the seed that reproduces it. A fault injected into one
//! op's backward rule makes the gradient suite fail, and the verdict names the
//! op: the suspects are the ops present in every failing gradient case and in
//! no passing one.

pub mod oracle;

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{upsample_lowres, DegradeConfig, ImageCube, SampleTriple, RATIO};
use crate::metrics::{ergas, psnr, qnr_suite, sam, ssim, uqi, FullScores};
use crate::model::{
    forward_graph, param_count, s2block::s2block_forward, s2block::ssio_fuse, u2net_forward, Bound, ModelConfig,
    ModelError, ParamStore, Prepared, Variant,
};
use crate::tensor::gradcheck::{finite_diff_check_many, finite_diff_check_with, FdReport, Stencil};
use crate::tensor::{ConvMode, Graph, OpKind, Tensor, TensorError, Var};

pub const VERDICT_SCHEMA: &str = "fuselab-verify/1";

/// Finite-difference step and tolerance for single primitives.
pub const PRIMITIVE_H: f64 = 1e-5;
pub const PRIMITIVE_TOL: f64 = 1e-4;
/// Five-point step and tolerance for the whole network. Smaller steps let
/// roundoff dominate on gradients near 1e-8; larger ones straddle more kinks.
pub const END_TO_END_H: f64 = 5e-4;
pub const END_TO_END_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed error, or the checked quantity.
    pub measured: f64,
    /// Bound `measured` was compared against.
    pub tolerance: f64,
    pub seed: u64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub cases: Vec<CaseResult>,
    /// Gradient suite only: ops implicated by the failing cases.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub suspects: Vec<OpKind>,
}

impl SuiteResult {
    fn new(name: &str, cases: Vec<CaseResult>) -> Self {
        SuiteResult { name: name.into(), passed: cases.iter().all(|c| c.passed), cases, suspects: Vec::new() }
    }

    pub fn failures(&self) -> impl Iterator<Item = &CaseResult> {
        self.cases.iter().filter(|c| !c.passed)
    }

    /// Largest `measured` over the cases.
    pub fn worst(&self) -> f64 {
        self.cases.iter().map(|c| c.measured).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub schema: String,
    pub passed: bool,
    pub seed: u64,
    pub fault: Option<OpKind>,
    pub suites: Vec<SuiteResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Gradients,
    Attention,
    Residual,
    Ssio,
    Metrics,
    Parameters,
}

impl Suite {
    pub const ALL: [Suite; 6] =
        [Suite::Gradients, Suite::Attention, Suite::Residual, Suite::Ssio, Suite::Metrics, Suite::Parameters];

    pub fn run(self, seed: u64, fault: Option<OpKind>) -> SuiteResult {
        match self {
            Suite::Gradients => gradient_suite(seed, fault),
            Suite::Attention => attention_suite(seed, 100),
            Suite::Residual => residual_suite(seed, 20),
            Suite::Ssio => ssio_suite(seed, 100),
            Suite::Metrics => metric_suite(seed, 20),
            Suite::Parameters => parameter_suite(),
        }
    }
}

/// Runs `suites` in order.
pub fn run(suites: &[Suite], seed: u64, fault: Option<OpKind>) -> Verdict {
    let suites: Vec<SuiteResult> = suites.iter().map(|s| s.run(seed, fault)).collect();
    Verdict { schema: VERDICT_SCHEMA.into(), passed: suites.iter().all(|s| s.passed), seed, fault, suites }
}

fn case(name: impl Into<String>, measured: f64, tolerance: f64, seed: u64, detail: impl Into<String>) -> CaseResult {
    CaseResult { name: name.into(), passed: measured <= tolerance, measured, tolerance, seed, detail: detail.into() }
}

fn failed(name: impl Into<String>, seed: u64, err: impl std::fmt::Display) -> CaseResult {
    CaseResult {
        name: name.into(),
        passed: false,
        measured: f64::INFINITY,
        tolerance: 0.0,
        seed,
        detail: err.to_string(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Values in `±[margin, 1)`.
fn signed_tensor(shape: &[usize], rng: &mut ChaCha8Rng, margin: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let mag = rng.gen_range(margin..1.0);
        if rng.gen_bool(0.5) {
            mag
        } else {
            -mag
        }
    })
}

type Loss = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>>;

/// `sum(y ⊙ w)` with fixed weights, so every output element reaches the loss.
fn weighted(g: &mut Graph<f64>, y: Var, w: &Tensor<f64>) -> Result<Var, TensorError> {
    let w = g.leaf(w);
    let p = g.mul(y, w)?;
    g.sum(p)
}

struct GradCase {
    name: String,
    inputs: Vec<Tensor<f64>>,
    loss: Loss,
}

fn unary(
    name: &str,
    rng: &mut ChaCha8Rng,
    shapes: &[&[usize]],
    margin: f64,
    out_shape: &[usize],
    f: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError> + 'static,
) -> GradCase {
    let inputs = shapes.iter().map(|s| signed_tensor(s, rng, margin)).collect();
    let w = signed_tensor(out_shape, rng, 0.1);
    GradCase {
        name: name.into(),
        inputs,
        loss: Box::new(move |g, v| {
            let y = f(g, v)?;
            weighted(g, y, &w)
        }),
    }
}

fn primitive_cases(seed: u64) -> Vec<GradCase> {
    let r = &mut rng(seed);
    let kink = 10.0 * PRIMITIVE_H;
    let mut cases = vec![
        unary("matmul", r, &[&[3, 4], &[4, 2]], 0.0, &[3, 2], |g, v| g.matmul(v[0], v[1])),
        unary("softmax_rows", r, &[&[3, 5]], 0.0, &[3, 5], |g, v| g.softmax_rows(v[0])),
        unary("fully_connected", r, &[&[2, 3, 4], &[4, 5], &[5]], 0.0, &[2, 3, 5], |g, v| {
            g.fully_connected(v[0], v[1], v[2])
        }),
        unary("add_bias", r, &[&[2, 3, 4], &[4]], 0.0, &[2, 3, 4], |g, v| g.add_bias(v[0], v[1])),
        unary("add", r, &[&[2, 3], &[2, 3]], 0.0, &[2, 3], |g, v| g.add(v[0], v[1])),
        unary("sub", r, &[&[2, 3], &[2, 3]], 0.0, &[2, 3], |g, v| g.sub(v[0], v[1])),
        unary("mul", r, &[&[2, 3], &[2, 3]], 0.0, &[2, 3], |g, v| g.mul(v[0], v[1])),
        unary("scale", r, &[&[2, 3]], 0.0, &[2, 3], |g, v| g.scale(v[0], -1.7)),
        unary("lrelu", r, &[&[4, 3]], kink, &[4, 3], |g, v| g.lrelu(v[0], 0.2)),
        unary("abs", r, &[&[4, 3]], kink, &[4, 3], |g, v| g.abs(v[0])),
        unary("reshape", r, &[&[2, 3, 4]], 0.0, &[4, 6], |g, v| g.reshape(v[0], &[4, 6])),
        unary("permute", r, &[&[2, 3, 4]], 0.0, &[4, 2, 3], |g, v| g.permute(v[0], &[2, 0, 1])),
        unary("concat", r, &[&[2, 3, 4], &[2, 3, 2]], 0.0, &[2, 3, 6], |g, v| g.concat(v[0], v[1])),
    ];
    for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
        let sa: &[usize] = if ta { &[2, 4, 3] } else { &[2, 3, 4] };
        let sb: &[usize] = if tb { &[2, 5, 4] } else { &[2, 4, 5] };
        let name = format!("batch_matmul[{}{}]", if ta { "T" } else { "N" }, if tb { "T" } else { "N" });
        cases.push(unary(&name, r, &[sa, sb], 0.0, &[2, 3, 5], move |g, v| g.bmm(v[0], v[1], ta, tb)));
    }
    let convs: [(&str, [usize; 4], [usize; 4], ConvMode, [usize; 4]); 5] = [
        ("conv2d[same3]", [2, 4, 5, 3], [3, 3, 3, 2], ConvMode::same(3), [2, 4, 5, 2]),
        ("conv2d[stride2]", [1, 4, 6, 2], [2, 2, 2, 3], ConvMode::Standard { stride: 2, pad: 0 }, [1, 2, 3, 3]),
        ("conv2d[depthwise3]", [1, 4, 4, 2], [3, 3, 2, 2], ConvMode::Depthwise { stride: 1, pad: 1 }, [1, 4, 4, 4]),
        ("conv2d[depthwise1]", [1, 4, 4, 3], [1, 1, 3, 2], ConvMode::Depthwise { stride: 1, pad: 0 }, [1, 4, 4, 6]),
        ("conv2d[transposed2]", [2, 2, 3, 3], [3, 2, 2, 2], ConvMode::Transposed { stride: 2 }, [2, 4, 6, 2]),
    ];
    for (name, xs, ks, mode, ys) in convs {
        cases.push(unary(name, r, &[&xs, &ks], 0.0, &ys, move |g, v| g.conv2d(v[0], v[1], mode)));
    }
    // a bare reduction, so faults in `mul` and `sum` can be told apart
    cases.push(GradCase {
        name: "sum".into(),
        inputs: vec![signed_tensor(&[3, 4], r, 0.0)],
        loss: Box::new(|g, v| g.sum(v[0])),
    });
    cases
}

fn with_fault(loss: &Loss, fault: Option<OpKind>) -> impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError> + '_ {
    move |g, v| {
        if let Some(k) = fault {
            g.inject_fault(k);
        }
        loss(g, v)
    }
}

fn ops_of(loss: &Loss, inputs: &[Tensor<f64>]) -> BTreeSet<OpKind> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t)).collect();
    match loss(&mut g, &vars) {
        Ok(_) => g.ops().into_iter().filter(|&k| k != OpKind::Leaf).collect(),
        Err(_) => BTreeSet::new(),
    }
}

/// Network with random nonzero biases (zero biases park pre-activations on the
/// lrelu kink) and the loss `sum(|O − X| − r)`, with `r = |O − X|` at the
/// check point so the summed value sits near zero.
pub struct EndToEnd {
    pub cfg: ModelConfig,
    pub names: Vec<String>,
    pub inputs: Vec<Tensor<f64>>,
    loss: Loss,
}

impl EndToEnd {
    /// Tiny configuration `S = 8`, `S′ = 4`, 8×8 guide, 4 bands.
    pub fn tiny(seed: u64) -> Result<Self, ModelError> {
        let cfg = ModelConfig::new(1, 4, 8, 4).with_seed(seed);
        let store = ParamStore::<f64>::init(&cfg)?;
        let triple = SampleTriple::synthesize("e2e", 16, 4, &DegradeConfig::default(), seed)?;
        let a = triple.a.crop(0, 0, 8, 8)?;
        let b = triple.b.crop(0, 0, 2, 2)?;
        let x = triple.x.as_ref().expect("synthesized triples carry a reference").crop(0, 0, 8, 8)?;
        let prep = Prepared::<f64>::new(&a, &b, &cfg)?;
        let target = Tensor::new(vec![1, 8, 8, 4], x.data().iter().map(|&v| v as f64).collect())?;
        let r = &mut rng(seed ^ 0x5eed);
        let inputs: Vec<Tensor<f64>> = store
            .tensors()
            .iter()
            .map(|p| {
                let mut data = p.data.clone();
                if p.spec.name.ends_with(".b") {
                    data.iter_mut().for_each(|v| *v = r.gen_range(0.05..0.5) * if r.gen_bool(0.5) { 1.0 } else { -1.0 });
                }
                Tensor::new(p.spec.shape.clone(), data)
            })
            .collect::<Result<_, _>>()?;
        let names: Vec<String> = store.tensors().iter().map(|p| p.spec.name.clone()).collect();
        let raw = {
            let (names, prep, target, cfg) = (names.clone(), prep.clone(), target.clone(), cfg.clone());
            move |g: &mut Graph<f64>, v: &[Var]| -> Result<Var, TensorError> {
                let bound = Bound::from_map(names.iter().cloned().zip(v.iter().copied()).collect::<HashMap<_, _>>());
                let (a, bu, xt) = (g.leaf(&prep.a), g.leaf(&prep.bu), g.leaf(&target));
                let o = forward_graph(g, &bound, &cfg, a, bu).map_err(|e| match e {
                    ModelError::Tensor(t) => t,
                    other => TensorError::Contract { op: "forward", detail: other.to_string() },
                })?;
                let d = g.sub(o, xt)?;
                g.abs(d)
            }
        };
        let reference = {
            let mut g = Graph::new();
            let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t)).collect();
            let d = raw(&mut g, &vars)?;
            g.to_tensor(d)
        };
        let loss: Loss = Box::new(move |g, v| {
            let d = raw(g, v)?;
            let r = g.leaf(&reference);
            let centered = g.sub(d, r)?;
            g.sum(centered)
        });
        Ok(EndToEnd { cfg, names, inputs, loss })
    }

    pub fn numel(&self) -> usize {
        self.inputs.iter().map(Tensor::numel).sum()
    }

    /// Checks a random `fraction` of all parameter elements. Stencils that cross
    /// a kink are skipped and replaced by further draws. Returns the worst
    /// batch report with `checked` and `straddled` summed over all batches.
    pub fn check(&self, fraction: f64, seed: u64, fault: Option<OpKind>) -> Result<FdReport, TensorError> {
        let total = self.numel();
        let want = ((total as f64 * fraction).ceil() as usize).clamp(1, total);
        let sizes: Vec<usize> = self.inputs.iter().map(Tensor::numel).collect();
        let coord = |mut flat: usize| {
            let mut i = 0;
            while flat >= sizes[i] {
                flat -= sizes[i];
                i += 1;
            }
            (i, flat)
        };
        let order: Vec<(usize, usize)> =
            rand::seq::index::sample(&mut rng(seed), total, total).into_iter().map(coord).collect();
        let loss = with_fault(&self.loss, fault);
        let (mut next, mut checked, mut straddled) = (0, 0, 0);
        let mut worst: Option<FdReport> = None;
        while checked < want && next < total {
            let end = (next + want - checked).min(total);
            let rep = finite_diff_check_with(&loss, &self.inputs, END_TO_END_H, Some(&order[next..end]), Stencil::FivePoint)?;
            next = end;
            checked += rep.checked;
            straddled += rep.straddled;
            if rep.checked > 0 && worst.as_ref().map_or(true, |w| rep.max_rel_err > w.max_rel_err) {
                worst = Some(rep);
            }
        }
        let worst = worst.unwrap_or(FdReport {
            max_rel_err: 0.0,
            worst: (0, 0),
            analytic: 0.0,
            numeric: 0.0,
            checked: 0,
            straddled: 0,
        });
        Ok(FdReport { checked, straddled, ..worst })
    }
}

/// Every primitive op against central differences, then the tiny network on a
/// 1% parameter sample.
pub fn gradient_suite(seed: u64, fault: Option<OpKind>) -> SuiteResult {
    let mut cases = Vec::new();
    let mut ops = Vec::new();
    for c in primitive_cases(seed) {
        ops.push(ops_of(&c.loss, &c.inputs));
        cases.push(match finite_diff_check_many(with_fault(&c.loss, fault), &c.inputs, PRIMITIVE_H, None) {
            Ok(rep) => case(
                c.name,
                rep.max_rel_err,
                PRIMITIVE_TOL,
                seed,
                format!("{} checked; worst input {} element {}", rep.checked, rep.worst.0, rep.worst.1),
            ),
            Err(e) => failed(c.name, seed, e),
        });
    }
    let e2e = EndToEnd::tiny(seed).map_err(|e| e.to_string()).and_then(|e2e| {
        let rep = e2e.check(0.01, seed, fault).map_err(|e| e.to_string())?;
        let ops = ops_of(&e2e.loss, &e2e.inputs);
        // more than 10% of draws on a kink would bias the sample
        let ok_sample = rep.straddled * 10 <= rep.checked;
        let detail = format!(
            "{} of {} parameters checked, {} straddled; worst {}",
            rep.checked,
            e2e.numel(),
            rep.straddled,
            e2e.names[rep.worst.0]
        );
        let mut c = case("end_to_end", rep.max_rel_err, END_TO_END_TOL, seed, detail);
        c.passed &= ok_sample;
        Ok((c, ops))
    });
    match e2e {
        Ok((c, o)) => {
            cases.push(c);
            ops.push(o);
        }
        Err(e) => {
            cases.push(failed("end_to_end", seed, e));
            ops.push(BTreeSet::new());
        }
    }
    let mut suite = SuiteResult::new("gradients", cases);
    suite.suspects = suspects(&suite.cases, &ops);
    suite
}

fn suspects(cases: &[CaseResult], ops: &[BTreeSet<OpKind>]) -> Vec<OpKind> {
    let mut fail = cases.iter().zip(ops).filter(|(c, _)| !c.passed).map(|(_, o)| o);
    let Some(first) = fail.next() else { return Vec::new() };
    let common = fail.fold(first.clone(), |acc, o| &acc & o);
    let cleared: BTreeSet<OpKind> = cases.iter().zip(ops).filter(|(c, _)| c.passed).flat_map(|(_, o)| o.iter().copied()).collect();
    common.difference(&cleared).copied().collect()
}

fn s2_store(width: usize, seed: u64) -> Result<ParamStore<f64>, ModelError> {
    // one stage is enough: the stage-1 block has width `width`
    ParamStore::init(&ModelConfig::new(1, 1, width, 2).with_seed(seed))
}

fn bind(store: &ParamStore<f64>) -> (Graph<f64>, Bound) {
    let mut g = Graph::new();
    let b = store.bind(&mut g, false);
    (g, b)
}

fn row_stochastic_error(values: &[f64], cols: usize) -> f64 {
    values
        .chunks(cols)
        .map(|row| {
            let sum_err = (row.iter().sum::<f64>() - 1.0).abs();
            let range_err = row.iter().map(|&v| (-v).max(v - 1.0).max(0.0)).fold(0.0, f64::max);
            sum_err.max(range_err)
        })
        .fold(0.0, f64::max)
}

/// Row sums and ranges of both correlation matrices on random blocks, and
/// uniform spatial attention for constant spatial input.
pub fn attention_suite(seed: u64, instances: usize) -> SuiteResult {
    let mut cases = Vec::new();
    let mut worst = (0.0f64, 0u64);
    let mut errors = Vec::new();
    for k in 0..instances {
        let s = seed.wrapping_add(k as u64);
        let r = &mut rng(s);
        let (h, w, heads) = (r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..4));
        let scale = r.gen_range(0.1..10.0);
        let res = (|| -> Result<f64, ModelError> {
            let store = s2_store(2 * heads, s)?;
            let (mut g, b) = bind(&store);
            let shape = [1, h, w, 2 * heads];
            let fa = g.leaf(&Tensor::from_fn(&shape, |_| r.gen_range(-1.0..1.0) * scale));
            let fe = g.leaf(&Tensor::from_fn(&shape, |_| r.gen_range(-1.0..1.0) * scale));
            let t = s2block_forward(&mut g, &b, "spe.s1.s2", fa, fe, 2, Variant::Full)?;
            let (cspa, cspe) = (t.cspa.expect("full block has Cspa"), t.cspe.expect("full block has Cspe"));
            Ok(row_stochastic_error(g.value(cspa), h * w).max(row_stochastic_error(g.value(cspe), 2)))
        })();
        match res {
            Ok(e) if e > worst.0 => worst = (e, s),
            Ok(_) => {}
            Err(e) => errors.push(failed(format!("row_stochastic[{k}]"), s, e)),
        }
    }
    cases.push(case("row_stochastic", worst.0, 1e-6, worst.1, format!("{instances} random blocks")));
    cases.extend(errors);

    let uniform = (|| -> Result<f64, ModelError> {
        let r = &mut rng(seed);
        let store = s2_store(4, seed)?;
        let (mut g, b) = bind(&store);
        let (h, w) = (3, 4);
        let px: Vec<f64> = (0..4).map(|_| r.gen_range(-1.0..1.0)).collect();
        let fa = g.leaf(&Tensor::from_fn(&[1, h, w, 4], |i| px[i % 4]));
        let fe = g.leaf(&Tensor::from_fn(&[1, h, w, 4], |_| r.gen_range(-1.0..1.0)));
        let t = s2block_forward(&mut g, &b, "spe.s1.s2", fa, fe, 2, Variant::Full)?;
        let want = 1.0 / (h * w) as f64;
        Ok(g.value(t.cspa.expect("full block has Cspa")).iter().map(|v| (v - want).abs()).fold(0.0, f64::max))
    })();
    cases.push(match uniform {
        Ok(e) => case("constant_input_uniform", e, 1e-6, seed, "3x4 constant spatial input"),
        Err(e) => failed("constant_input_uniform", seed, e),
    });
    SuiteResult::new("attention", cases)
}

/// Zero head ⇒ `O == B^U` bit-exactly across variants, shapes and seeds.
pub fn residual_suite(seed: u64, combos: usize) -> SuiteResult {
    let cases = (0..combos)
        .map(|k| {
            let s = seed.wrapping_add(k as u64);
            let r = &mut rng(s);
            let variant = Variant::ALL[k % Variant::ALL.len()];
            let guide = if r.gen_bool(0.5) { 1 } else { 3 };
            let bands = r.gen_range(2..6);
            let (hq, wq) = (r.gen_range(1..5), r.gen_range(1..5));
            let name = format!("zero_head[{}, {}x{}x{bands}, c={guide}]", variant.name(), 4 * hq, 4 * wq);
            let res = (|| -> Result<usize, ModelError> {
                let mut cfg = ModelConfig::new(guide, bands, 4, 2).with_variant(variant).with_seed(s);
                cfg.zero_head = true;
                let store = ParamStore::<f32>::init(&cfg)?;
                let a = ImageCube::from_fn(4 * hq, 4 * wq, guide, |_, _, _| r.gen::<f32>())?;
                let b = ImageCube::from_fn(hq, wq, bands, |_, _, _| r.gen::<f32>())?;
                let o = u2net_forward(&a, &b, &store, &cfg)?;
                let bu = upsample_lowres(&b, RATIO, cfg.upsampler)?;
                Ok(o.data().iter().zip(bu.data()).filter(|(p, q)| p.to_bits() != q.to_bits()).count())
            })();
            match res {
                Ok(n) => case(name, n as f64, 0.0, s, format!("{n} differing values")),
                Err(e) => failed(name, s, e),
            }
        })
        .collect();
    SuiteResult::new("residual", cases)
}

fn row_stochastic(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    let mut m: Vec<f64> = (0..rows * cols).map(|_| r.gen_range(0.0..1.0)).collect();
    for row in m.chunks_mut(cols) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    m
}

/// The fused SSIO product against explicit index loops.
pub fn ssio_suite(seed: u64, instances: usize) -> SuiteResult {
    let mut worst = (0.0f64, seed);
    let mut errors = Vec::new();
    for k in 0..instances {
        let s = seed.wrapping_add(k as u64);
        let r = &mut rng(s);
        let (hw, sp, heads) = (r.gen_range(1..=16), r.gen_range(1..=4), r.gen_range(1..=3));
        let cspa: Vec<Vec<f64>> = (0..heads).map(|_| row_stochastic(hw, hw, r)).collect();
        let cspe: Vec<Vec<f64>> = (0..heads).map(|_| row_stochastic(sp, sp, r)).collect();
        let tb: Vec<Vec<f64>> = (0..heads).map(|_| (0..hw * sp).map(|_| r.gen_range(-2.0..2.0)).collect()).collect();
        let tc: Vec<Vec<f64>> = (0..heads).map(|_| (0..hw * sp).map(|_| r.gen_range(-2.0..2.0)).collect()).collect();
        let res = (|| -> Result<f64, ModelError> {
            let mut g = Graph::<f64>::new();
            let a = g.constant(&[heads, hw, hw], cspa.concat())?;
            let e = g.constant(&[heads, sp, sp], cspe.concat())?;
            let b = g.constant(&[heads, hw, sp], tb.concat())?;
            let c = g.constant(&[heads, hw, sp], tc.concat())?;
            let f = ssio_fuse(&mut g, a, e, b, c)?;
            let got = g.value(f);
            let mut err = 0.0f64;
            for n in 0..heads {
                let want = oracle::ssio(&cspa[n], &cspe[n], &tb[n], &tc[n], hw, sp);
                let block = &got[n * hw * sp..(n + 1) * hw * sp];
                err = block.iter().zip(&want).map(|(p, q)| (p - q).abs()).fold(err, f64::max);
            }
            Ok(err)
        })();
        match res {
            Ok(e) if e > worst.0 => worst = (e, s),
            Ok(_) => {}
            Err(e) => errors.push(failed(format!("ssio[{k}]"), s, e)),
        }
    }
    let mut cases = vec![case("ssio_vs_loops", worst.0, 1e-6, worst.1, format!("{instances} instances, HW <= 16"))];
    cases.extend(errors);
    SuiteResult::new("ssio", cases)
}

fn random_cube(h: usize, w: usize, c: usize, r: &mut ChaCha8Rng) -> ImageCube {
    ImageCube::from_fn(h, w, c, |_, _, _| r.gen_range(0.05f32..1.0)).expect("positive extents")
}

/// Production metrics against brute-force references on random 16×16×4 cubes,
/// plus exact identities.
pub fn metric_suite(seed: u64, cubes: usize) -> SuiteResult {
    const TOL: f64 = 1e-6;
    let names = ["psnr", "sam", "ergas", "ssim", "q", "d_lambda", "d_s", "qnr"];
    let mut worst: Vec<(f64, u64)> = vec![(0.0, seed); names.len()];
    let mut errors = Vec::new();
    for k in 0..cubes {
        let s = seed.wrapping_add(k as u64);
        let r = &mut rng(s);
        let (o, x) = (random_cube(16, 16, 4, r), random_cube(16, 16, 4, r));
        let (a, b) = (random_cube(16, 16, 1, r), random_cube(4, 4, 4, r));
        let res = (|| -> Result<Vec<f64>, crate::metrics::MetricError> {
            let (p, q) = (oracle::plane(&o, 0), oracle::plane(&x, 0));
            let full = qnr_suite(&o, &a, &b, RATIO)?;
            let (dl, ds, qnr) = oracle::qnr(&o, &a, &b, RATIO);
            Ok(vec![
                (psnr(&o, &x, 1.0)? - oracle::psnr(&o, &x)).abs(),
                (sam(&o, &x)?.degrees - oracle::sam(&o, &x)).abs(),
                (ergas(&o, &x, RATIO)? - oracle::ergas(&o, &x, RATIO as f64)).abs(),
                (ssim(&o, &x, 1.0)? - oracle::ssim(&o, &x)).abs(),
                (uqi(&p, &q, 16, 16, 16)?.value - oracle::q(&p, &q)).abs(),
                (full.d_lambda - dl).abs(),
                (full.d_s - ds).abs(),
                (full.qnr - qnr).abs(),
            ])
        })();
        match res {
            Ok(errs) => {
                for (w, e) in worst.iter_mut().zip(errs) {
                    if e > w.0 || e.is_nan() {
                        *w = (if e.is_nan() { f64::INFINITY } else { e }, s);
                    }
                }
            }
            Err(e) => errors.push(failed(format!("oracles[{k}]"), s, e)),
        }
    }
    let mut cases: Vec<CaseResult> = names
        .iter()
        .zip(&worst)
        .map(|(n, &(e, s))| case(*n, e, TOL, s, format!("max |metric - oracle| over {cubes} cubes")))
        .collect();
    cases.extend(errors);

    let r = &mut rng(seed);
    let x = random_cube(16, 16, 4, r);
    // halving is exact, so `x` is exactly twice `half`
    let half = ImageCube::new(16, 16, 4, x.data().iter().map(|v| 0.5 * v).collect()).expect("same extents");
    cases.push(match sam(&half, &x) {
        Ok(v) => case("sam_scale_invariance", v.degrees.abs(), 0.0, seed, "SAM(X, 2X)"),
        Err(e) => failed("sam_scale_invariance", seed, e),
    });
    cases.push(match ergas(&x, &x, RATIO) {
        Ok(v) => case("ergas_identity", v.abs(), 0.0, seed, "ERGAS(X, X)"),
        Err(e) => failed("ergas_identity", seed, e),
    });
    let (o, a, b) = (random_cube(16, 16, 4, r), random_cube(16, 16, 1, r), random_cube(4, 4, 4, r));
    cases.push(match qnr_suite(&o, &a, &b, RATIO) {
        Ok(FullScores { d_lambda, d_s, qnr, .. }) => {
            let e = (qnr - (1.0 - d_lambda) * (1.0 - d_s)).abs();
            case("qnr_factorization", e, 0.0, seed, "QNR - (1 - D_lambda)(1 - D_s)")
        }
        Err(e) => failed("qnr_factorization", seed, e),
    });
    SuiteResult::new("metrics", cases)
}

/// The pansharpening preset `(c, C, S, S′) = (1, 8, 32, 16)` is heavyweight
/// (at least 5×10⁵ parameters) and its count does not depend on the seed.
pub fn parameter_suite() -> SuiteResult {
    let counts: Vec<usize> = [0u64, 1, 2, 12345]
        .into_iter()
        .map(|s| param_count(&ModelConfig::new(1, 8, 32, 16).with_seed(s)))
        .collect();
    let n = counts[0] as f64;
    let spread = counts.iter().map(|&c| (c as f64 - n).abs()).fold(0.0, f64::max);
    let cases = vec![
        CaseResult {
            name: "heavyweight".into(),
            passed: n >= 5e5,
            measured: n,
            tolerance: 5e5,
            seed: 0,
            detail: format!("{} parameters, need >= 500000", counts[0]),
        },
        case("seed_invariant", spread, 0.0, 0, format!("counts {counts:?}")),
    ];
    SuiteResult::new("parameters", cases)
}
