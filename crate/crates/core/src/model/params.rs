use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError, Variant};
use crate::tensor::{Graph, Real, Var};

/// How a parameter tensor is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamInit {
    /// Uniform in `±1/√fan_in`.
    FanIn(usize),
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: ParamInit,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Default)]
struct Layout(Vec<ParamSpec>);

impl Layout {
    fn push(&mut self, name: String, shape: Vec<usize>, init: ParamInit) {
        self.0.push(ParamSpec { name, shape, init });
    }

    fn conv(&mut self, name: &str, k: usize, cin: usize, cout: usize) {
        self.push(
            format!("{name}.w"),
            vec![k, k, cin, cout],
            ParamInit::FanIn(k * k * cin),
        );
        self.push(format!("{name}.b"), vec![cout], ParamInit::Zeros);
    }

    fn fc(&mut self, name: &str, din: usize, dout: usize) {
        self.push(format!("{name}.w"), vec![din, dout], ParamInit::FanIn(din));
        self.push(format!("{name}.b"), vec![dout], ParamInit::Zeros);
    }

    fn resblock(&mut self, name: &str, s: usize) {
        self.conv(&format!("{name}.conv1"), 3, s, s);
        self.conv(&format!("{name}.conv2"), 3, s, s);
    }

    fn mlp(&mut self, name: &str, s: usize) {
        self.fc(&format!("{name}.fc1"), s, s);
        self.fc(&format!("{name}.fc2"), s, s);
    }

    fn encoder(&mut self, name: &str, s: usize, dk: usize) {
        self.conv(&format!("{name}.down"), 2, s, s);
        self.push(
            format!("{name}.widen.w"),
            vec![dk, dk, s, 2],
            ParamInit::FanIn(dk * dk),
        );
        self.push(format!("{name}.widen.b"), vec![2 * s], ParamInit::Zeros);
    }

    fn decoder(&mut self, name: &str, s: usize) {
        // transposed kernel layout [cin, kh, kw, cout]; each output sees `cin` inputs
        self.push(
            format!("{name}.w"),
            vec![2 * s, 2, 2, s],
            ParamInit::FanIn(2 * s),
        );
        self.push(format!("{name}.b"), vec![s], ParamInit::Zeros);
    }

    fn s2block(&mut self, name: &str, s: usize, variant: Variant) {
        let maps: &[&str] = match variant {
            Variant::Full | Variant::V1 => &["ta", "tb", "tc", "td", "out"],
            Variant::V2 => {
                self.fc(&format!("{name}.fuse"), 2 * s, s);
                return;
            }
            Variant::V3 => &["ta", "tb", "tc", "out"],
            Variant::V4 => &["tb", "tc", "td", "out"],
        };
        for m in maps {
            self.fc(&format!("{name}.{m}"), s, s);
        }
    }
}

/// Ordered parameter specification of a configuration.
pub fn layout(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut l = Layout::default();
    let (s, r, dk) = (cfg.width, cfg.resblocks_per_stage, cfg.depthwise_kernel);
    let single = cfg.variant == Variant::V1;
    if single {
        l.conv("lift", 3, cfg.guide_channels + cfg.bands, s);
    } else {
        l.conv("spa.lift", 3, cfg.guide_channels, s);
        l.conv("spe.lift", 3, cfg.bands, s);
        for k in 1..=4 {
            for i in 0..r {
                l.resblock(&format!("spa.s{k}.res{i}"), cfg.stage_width(k));
            }
        }
        l.encoder("spa.enc1", s, dk);
        l.encoder("spa.enc2", 2 * s, dk);
        l.decoder("spa.dec1", 2 * s);
        l.decoder("spa.dec2", s);
    }
    let branch = if single { "main" } else { "spe" };
    for k in 1..=5 {
        let sk = cfg.stage_width(k);
        l.s2block(&format!("{branch}.s{k}.s2"), sk, cfg.variant);
        for i in 0..r {
            l.mlp(&format!("{branch}.s{k}.mlp{i}"), sk);
        }
    }
    l.encoder(&format!("{branch}.enc1"), s, dk);
    l.encoder(&format!("{branch}.enc2"), 2 * s, dk);
    l.decoder(&format!("{branch}.dec1"), 2 * s);
    l.decoder(&format!("{branch}.dec2"), s);
    l.conv("head", 3, s, cfg.bands);
    l.0
}

/// Exact number of scalar parameters.
pub fn param_count(cfg: &ModelConfig) -> usize {
    layout(cfg).iter().map(ParamSpec::numel).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T> {
    pub spec: ParamSpec,
    pub data: Vec<T>,
}

/// Named parameter tensors in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    tensors: Vec<ParamTensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    /// Seeded initialization, drawing in layout order.
    pub fn init(cfg: &ModelConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let tensors = layout(cfg)
            .into_iter()
            .map(|spec| {
                let n = spec.numel();
                let data = match spec.init {
                    ParamInit::Zeros => vec![T::zero(); n],
                    _ if cfg.zero_head && spec.name.starts_with("head.") => vec![T::zero(); n],
                    ParamInit::FanIn(fan_in) => {
                        let bound = 1.0 / (fan_in as f64).sqrt();
                        (0..n).map(|_| T::c(rng.gen_range(-bound..bound))).collect()
                    }
                };
                ParamTensor { spec, data }
            })
            .collect();
        Ok(Self::from_tensors(tensors))
    }

    /// Store over arbitrary named tensors, in the given order.
    pub fn from_parts(tensors: Vec<ParamTensor<T>>) -> Result<Self, ModelError> {
        let mut seen = std::collections::HashSet::new();
        for t in &tensors {
            if t.data.len() != t.spec.numel() {
                return Err(ModelError::Config(format!(
                    "{} holds {} values for shape {:?}",
                    t.spec.name,
                    t.data.len(),
                    t.spec.shape
                )));
            }
            if !seen.insert(t.spec.name.as_str()) {
                return Err(ModelError::Config(format!(
                    "duplicate parameter {}",
                    t.spec.name
                )));
            }
        }
        Ok(Self::from_tensors(tensors))
    }

    fn from_tensors(tensors: Vec<ParamTensor<T>>) -> Self {
        let index = tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (t.spec.name.clone(), i))
            .collect();
        ParamStore { tensors, index }
    }

    /// Rebuilds a store from named tensors, checking them against the layout.
    pub fn from_named(
        cfg: &ModelConfig,
        mut named: HashMap<String, (Vec<usize>, Vec<T>)>,
    ) -> Result<Self, ModelError> {
        let mut tensors = Vec::new();
        for spec in layout(cfg) {
            let (shape, data) = named
                .remove(&spec.name)
                .ok_or_else(|| ModelError::Config(format!("missing parameter {}", spec.name)))?;
            if shape != spec.shape || data.len() != spec.numel() {
                return Err(ModelError::Config(format!(
                    "parameter {} has shape {shape:?}, expected {:?}",
                    spec.name, spec.shape
                )));
            }
            tensors.push(ParamTensor { spec, data });
        }
        if let Some(extra) = named.keys().next() {
            return Err(ModelError::Config(format!("unexpected parameter {extra}")));
        }
        Ok(Self::from_tensors(tensors))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensors(&self) -> &[ParamTensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor<T>> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Records every tensor in `g`, as differentiable leaves when `trainable`.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                let r = if trainable {
                    g.param(&t.spec.shape, t.data.clone())
                } else {
                    g.constant(&t.spec.shape, t.data.clone())
                };
                r.expect("store tensors match their specs")
            })
            .collect();
        Bound {
            vars,
            index: self.index.clone(),
        }
    }
}

/// Graph handles of a bound [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl Bound {
    /// Handles supplied by the caller, e.g. a finite-difference harness.
    pub fn from_map(map: HashMap<String, Var>) -> Self {
        let (names, vars): (Vec<String>, Vec<Var>) = map.into_iter().unzip();
        let index = names.into_iter().enumerate().map(|(i, n)| (n, i)).collect();
        Bound { vars, index }
    }

    pub fn var(&self, name: &str) -> Result<Var, ModelError> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| ModelError::Config(format!("no parameter named {name}")))
    }

    /// Handles in layout order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
