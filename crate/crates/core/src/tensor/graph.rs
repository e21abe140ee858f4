use std::fmt;

use super::conv::{self, ConvGeom, ConvMode};
use super::kernels::{self, gemm};
use super::{Real, Tensor, TensorError};

/// Handle to a value recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive operation kinds, used for diagnostics and fault injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Leaf,
    Matmul,
    BatchMatmul,
    SoftmaxRows,
    Conv2d,
    FullyConnected,
    AddBias,
    Add,
    Sub,
    Mul,
    Scale,
    Lrelu,
    Abs,
    Sum,
    Reshape,
    Permute,
    Concat,
}

impl OpKind {
    pub const ALL: [OpKind; 17] = [
        OpKind::Leaf,
        OpKind::Matmul,
        OpKind::BatchMatmul,
        OpKind::SoftmaxRows,
        OpKind::Conv2d,
        OpKind::FullyConnected,
        OpKind::AddBias,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::Lrelu,
        OpKind::Abs,
        OpKind::Sum,
        OpKind::Reshape,
        OpKind::Permute,
        OpKind::Concat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Matmul => "matmul",
            OpKind::BatchMatmul => "batch_matmul",
            OpKind::SoftmaxRows => "softmax_rows",
            OpKind::Conv2d => "conv2d",
            OpKind::FullyConnected => "fully_connected",
            OpKind::AddBias => "add_bias",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::Lrelu => "lrelu",
            OpKind::Abs => "abs",
            OpKind::Sum => "sum",
            OpKind::Reshape => "reshape",
            OpKind::Permute => "permute",
            OpKind::Concat => "concat",
        }
    }

    pub fn parse(name: &str) -> Option<OpKind> {
        OpKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    BatchMatmul {
        a: Var,
        b: Var,
        trans_a: bool,
        trans_b: bool,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    SoftmaxRows {
        x: Var,
        cols: usize,
    },
    Conv2d {
        x: Var,
        k: Var,
        geom: ConvGeom,
    },
    FullyConnected {
        x: Var,
        w: Var,
        b: Var,
        rows: usize,
        din: usize,
        dout: usize,
    },
    AddBias {
        x: Var,
        b: Var,
        cols: usize,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        s: f64,
    },
    Lrelu {
        x: Var,
        slope: f64,
    },
    Abs {
        x: Var,
    },
    Sum {
        x: Var,
    },
    Reshape {
        x: Var,
    },
    Permute {
        x: Var,
        perm: Vec<usize>,
    },
    Concat {
        a: Var,
        b: Var,
        ca: usize,
        cb: usize,
    },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Matmul { .. } => OpKind::Matmul,
            Op::BatchMatmul { .. } => OpKind::BatchMatmul,
            Op::SoftmaxRows { .. } => OpKind::SoftmaxRows,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::FullyConnected { .. } => OpKind::FullyConnected,
            Op::AddBias { .. } => OpKind::AddBias,
            Op::Add { .. } => OpKind::Add,
            Op::Sub { .. } => OpKind::Sub,
            Op::Mul { .. } => OpKind::Mul,
            Op::Scale { .. } => OpKind::Scale,
            Op::Lrelu { .. } => OpKind::Lrelu,
            Op::Abs { .. } => OpKind::Abs,
            Op::Sum { .. } => OpKind::Sum,
            Op::Reshape { .. } => OpKind::Reshape,
            Op::Permute { .. } => OpKind::Permute,
            Op::Concat { .. } => OpKind::Concat,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match *self {
            Op::Leaf => vec![],
            Op::Matmul { a, b, .. }
            | Op::BatchMatmul { a, b, .. }
            | Op::Add { a, b }
            | Op::Sub { a, b }
            | Op::Mul { a, b }
            | Op::Concat { a, b, .. } => vec![a, b],
            Op::Conv2d { x, k, .. } => vec![x, k],
            Op::FullyConnected { x, w, b, .. } => vec![x, w, b],
            Op::AddBias { x, b, .. } => vec![x, b],
            Op::SoftmaxRows { x, .. }
            | Op::Scale { x, .. }
            | Op::Lrelu { x, .. }
            | Op::Abs { x }
            | Op::Sum { x }
            | Op::Reshape { x }
            | Op::Permute { x, .. } => vec![x],
        }
    }
}

struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

/// Tape of executed primitives. Nodes are appended in execution order, so the
/// record is topologically sorted by construction.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    fault: Option<OpKind>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            fault: None,
        }
    }

    /// Perturbs the backward rule of every op of `kind`. Verification harness only.
    pub fn inject_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Recorded op kinds in execution order.
    pub fn ops(&self) -> Vec<OpKind> {
        self.nodes.iter().map(|n| n.op.kind()).collect()
    }

    /// Side of the kink taken by every lrelu and abs input element, in tape order.
    pub fn branch_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for n in &self.nodes {
            if let Op::Lrelu { x, .. } | Op::Abs { x } = n.op {
                out.extend(self.nodes[x.0].value.iter().map(|&v| v >= T::zero()));
            }
        }
        out
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.nodes[v.0].grad.take()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Snapshot of a recorded value as a detached tensor.
    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("graph values are consistent")
    }

    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        self.push_leaf(t.shape().to_vec(), t.data().to_vec(), t.requires_grad())
    }

    /// Leaf that receives gradients.
    pub fn param(&mut self, shape: &[usize], data: Vec<T>) -> Result<Var, TensorError> {
        Self::check_len("param", shape, &data)?;
        Ok(self.push_leaf(shape.to_vec(), data, true))
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, shape: &[usize], data: Vec<T>) -> Result<Var, TensorError> {
        Self::check_len("constant", shape, &data)?;
        Ok(self.push_leaf(shape.to_vec(), data, false))
    }

    /// Copy of `x` cut off from the graph.
    pub fn detach(&mut self, x: Var) -> Var {
        let n = &self.nodes[x.0];
        let (shape, value) = (n.shape.clone(), n.value.clone());
        self.push_leaf(shape, value, false)
    }

    fn check_len(op: &'static str, shape: &[usize], data: &[T]) -> Result<(), TensorError> {
        if numel(shape) != data.len() {
            return Err(TensorError::Shape {
                op,
                detail: format!(
                    "shape {shape:?} needs {} elements, got {}",
                    numel(shape),
                    data.len()
                ),
            });
        }
        Ok(())
    }

    fn push_leaf(&mut self, shape: Vec<usize>, value: Vec<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            shape,
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op) -> Result<Var, TensorError> {
        debug_assert_eq!(numel(&shape), value.len());
        let inputs = op.inputs();
        if value.iter().any(|v| !v.is_finite()) {
            let inputs_finite = inputs
                .iter()
                .all(|i| self.nodes[i.0].value.iter().all(|v| v.is_finite()));
            if inputs_finite {
                return Err(TensorError::NonFinite {
                    op: op.kind().name(),
                });
            }
        }
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Dimension {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    /// `[m×k] · [k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::Dimension {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(
            m,
            k,
            n,
            self.value(a),
            false,
            self.value(b),
            false,
            &mut out,
            false,
        );
        self.push(vec![m, n], out, Op::Matmul { a, b, m, k, n })
    }

    /// Batched product `op(a[i]) · op(b[i])` over rank-3 operands, where `op`
    /// transposes the trailing two axes when requested.
    pub fn bmm(
        &mut self,
        a: Var,
        b: Var,
        trans_a: bool,
        trans_b: bool,
    ) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let bad = || TensorError::Dimension {
            op: "batch_matmul",
            lhs: sa.clone(),
            rhs: sb.clone(),
        };
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(bad());
        }
        let (m, k) = if trans_a {
            (sa[2], sa[1])
        } else {
            (sa[1], sa[2])
        };
        let (k2, n) = if trans_b {
            (sb[2], sb[1])
        } else {
            (sb[1], sb[2])
        };
        if k != k2 {
            return Err(bad());
        }
        let batch = sa[0];
        let mut out = vec![T::zero(); batch * m * n];
        {
            let (av, bv) = (self.value(a), self.value(b));
            for i in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    &av[i * m * k..(i + 1) * m * k],
                    trans_a,
                    &bv[i * k * n..(i + 1) * k * n],
                    trans_b,
                    &mut out[i * m * n..(i + 1) * m * n],
                    false,
                );
            }
        }
        self.push(
            vec![batch, m, n],
            out,
            Op::BatchMatmul {
                a,
                b,
                trans_a,
                trans_b,
                batch,
                m,
                k,
                n,
            },
        )
    }

    /// Softmax along the last axis.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        let cols = *shape.last().ok_or(TensorError::Shape {
            op: "softmax_rows",
            detail: "rank-0 input".into(),
        })?;
        let out = kernels::softmax_rows(self.value(x), cols);
        self.push(shape, out, Op::SoftmaxRows { x, cols })
    }

    /// 2-D convolution on NHWC input; see [`ConvMode`] for kernel layouts.
    pub fn conv2d(&mut self, x: Var, k: Var, mode: ConvMode) -> Result<Var, TensorError> {
        let geom = conv::plan(self.shape(x), self.shape(k), mode).map_err(|detail| {
            if detail.contains("channels") {
                TensorError::Dimension {
                    op: "conv2d",
                    lhs: self.shape(x).to_vec(),
                    rhs: self.shape(k).to_vec(),
                }
            } else {
                TensorError::Shape {
                    op: "conv2d",
                    detail,
                }
            }
        })?;
        let out = conv::forward(self.value(x), self.value(k), &geom);
        self.push(geom.out_shape(), out, Op::Conv2d { x, k, geom })
    }

    /// Affine map `x·w + b` along the last axis.
    pub fn fully_connected(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let (sx, sw, sb) = (
            self.shape(x).to_vec(),
            self.shape(w).to_vec(),
            self.shape(b).to_vec(),
        );
        let din = *sx.last().unwrap_or(&0);
        if sw.len() != 2 || sw[0] != din || sx.is_empty() {
            return Err(TensorError::Dimension {
                op: "fully_connected",
                lhs: sx,
                rhs: sw,
            });
        }
        let dout = sw[1];
        if sb != [dout] {
            return Err(TensorError::Dimension {
                op: "fully_connected",
                lhs: sw,
                rhs: sb,
            });
        }
        let rows = numel(&sx) / din.max(1);
        let mut out = vec![T::zero(); rows * dout];
        for r in out.chunks_exact_mut(dout) {
            r.copy_from_slice(self.value(b));
        }
        gemm(
            rows,
            din,
            dout,
            self.value(x),
            false,
            self.value(w),
            false,
            &mut out,
            true,
        );
        let mut shape = sx;
        *shape.last_mut().unwrap() = dout;
        self.push(
            shape,
            out,
            Op::FullyConnected {
                x,
                w,
                b,
                rows,
                din,
                dout,
            },
        )
    }

    /// Adds a bias vector along the last axis.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, TensorError> {
        let (sx, sb) = (self.shape(x).to_vec(), self.shape(b).to_vec());
        let cols = *sx.last().unwrap_or(&0);
        if sb != [cols] {
            return Err(TensorError::Dimension {
                op: "add_bias",
                lhs: sx,
                rhs: sb,
            });
        }
        let bias = self.value(b);
        let mut out = self.value(x).to_vec();
        for r in out.chunks_exact_mut(cols.max(1)) {
            for (o, &bv) in r.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        self.push(sx, out, Op::AddBias { x, b, cols })
    }

    fn zip_with(
        &mut self,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(T, T) -> T,
    ) -> Result<Var, TensorError> {
        self.same_shape(op.kind().name(), a, b)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(self.shape(a).to_vec(), out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with(a, b, Op::Add { a, b }, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with(a, b, Op::Sub { a, b }, |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with(a, b, Op::Mul { a, b }, |x, y| x * y)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var, TensorError> {
        let sv = T::c(s);
        let out = self.value(x).iter().map(|&v| v * sv).collect();
        self.push(self.shape(x).to_vec(), out, Op::Scale { x, s })
    }

    /// Leaky ReLU with negative `slope` in (0, 1).
    pub fn lrelu(&mut self, x: Var, slope: f64) -> Result<Var, TensorError> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(TensorError::Contract {
                op: "lrelu",
                detail: format!("slope {slope} outside (0, 1)"),
            });
        }
        let s = T::c(slope);
        let out = self
            .value(x)
            .iter()
            .map(|&v| if v >= T::zero() { v } else { v * s })
            .collect();
        self.push(self.shape(x).to_vec(), out, Op::Lrelu { x, slope })
    }

    pub fn abs(&mut self, x: Var) -> Result<Var, TensorError> {
        let out = self.value(x).iter().map(|v| v.abs()).collect();
        self.push(self.shape(x).to_vec(), out, Op::Abs { x })
    }

    /// Sum of all elements as a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let s: T = self.value(x).iter().copied().sum();
        self.push(vec![1], vec![s], Op::Sum { x })
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        if numel(shape) != numel(self.shape(x)) {
            return Err(TensorError::Shape {
                op: "reshape",
                detail: format!("cannot reshape {:?} into {shape:?}", self.shape(x)),
            });
        }
        let out = self.value(x).to_vec();
        self.push(shape.to_vec(), out, Op::Reshape { x })
    }

    /// Axis permutation; output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var, TensorError> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        let valid = perm.len() == shape.len()
            && perm
                .iter()
                .all(|&p| p < shape.len() && !std::mem::replace(&mut seen[p], true));
        if !valid {
            return Err(TensorError::Shape {
                op: "permute",
                detail: format!("{perm:?} is not a permutation of the axes of {shape:?}"),
            });
        }
        let out = kernels::permute(self.value(x), &shape, perm);
        let out_shape = perm.iter().map(|&p| shape[p]).collect();
        self.push(
            out_shape,
            out,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
        )
    }

    /// Concatenation along the last axis; leading axes must agree.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.is_empty() || sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(TensorError::Dimension {
                op: "concat",
                lhs: sa,
                rhs: sb,
            });
        }
        let (ca, cb) = (*sa.last().unwrap(), *sb.last().unwrap());
        let rows = numel(&sa) / ca.max(1);
        let (va, vb) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            out.extend_from_slice(&va[r * ca..(r + 1) * ca]);
            out.extend_from_slice(&vb[r * cb..(r + 1) * cb]);
        }
        let mut shape = sa;
        *shape.last_mut().unwrap() = ca + cb;
        self.push(shape, out, Op::Concat { a, b, ca, cb })
    }

    /// Reverse-mode sweep from a scalar `loss`. Leaf gradients accumulate across calls.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(TensorError::Contract {
                op: "backward",
                detail: format!(
                    "loss must be scalar, got shape {:?}",
                    self.nodes[loss.0].shape
                ),
            });
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        let mut leaf_grads = Vec::new();
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                leaf_grads.push((id, g));
                continue;
            }
            let mut contribs = self.backward_rule(id, &g);
            if self.fault == Some(node.op.kind()) {
                for (_, c) in &mut contribs {
                    c.iter_mut().for_each(|v| *v = *v * T::c(1.05) + T::c(1e-3));
                }
            }
            for (input, c) in contribs {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, &v)| *a += v),
                    slot @ None => *slot = Some(c),
                }
            }
        }
        for (id, g) in leaf_grads {
            let node = &mut self.nodes[id];
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &v)| *a += v),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_rule(&self, id: usize, g: &[T]) -> Vec<(Var, Vec<T>)> {
        let node = &self.nodes[id];
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            &Op::Matmul { a, b, m, k, n } => {
                if self.wants(a) {
                    let mut da = vec![T::zero(); m * k];
                    gemm(m, n, k, g, false, self.value(b), true, &mut da, false);
                    out.push((a, da));
                }
                if self.wants(b) {
                    let mut db = vec![T::zero(); k * n];
                    gemm(k, m, n, self.value(a), true, g, false, &mut db, false);
                    out.push((b, db));
                }
            }
            &Op::BatchMatmul {
                a,
                b,
                trans_a,
                trans_b,
                batch,
                m,
                k,
                n,
            } => {
                let (av, bv) = (self.value(a), self.value(b));
                if self.wants(a) {
                    let mut da = vec![T::zero(); batch * m * k];
                    for i in 0..batch {
                        let gi = &g[i * m * n..(i + 1) * m * n];
                        let bi = &bv[i * k * n..(i + 1) * k * n];
                        let dai = &mut da[i * m * k..(i + 1) * m * k];
                        if trans_a {
                            // stored k×m: op(b)·gᵀ
                            gemm(k, n, m, bi, trans_b, gi, true, dai, false);
                        } else {
                            gemm(m, n, k, gi, false, bi, !trans_b, dai, false);
                        }
                    }
                    out.push((a, da));
                }
                if self.wants(b) {
                    let mut db = vec![T::zero(); batch * k * n];
                    for i in 0..batch {
                        let gi = &g[i * m * n..(i + 1) * m * n];
                        let ai = &av[i * m * k..(i + 1) * m * k];
                        let dbi = &mut db[i * k * n..(i + 1) * k * n];
                        if trans_b {
                            // stored n×k: gᵀ·op(a)
                            gemm(n, m, k, gi, true, ai, trans_a, dbi, false);
                        } else {
                            gemm(k, m, n, ai, !trans_a, gi, false, dbi, false);
                        }
                    }
                    out.push((b, db));
                }
            }
            &Op::SoftmaxRows { x, cols } => {
                let mut dx = vec![T::zero(); g.len()];
                kernels::softmax_rows_backward(&node.value, g, cols, &mut dx);
                out.push((x, dx));
            }
            Op::Conv2d { x, k, geom } => {
                let (x, k) = (*x, *k);
                let mut dx = self.wants(x).then(|| vec![T::zero(); self.value(x).len()]);
                let mut dk = self.wants(k).then(|| vec![T::zero(); self.value(k).len()]);
                conv::backward(
                    self.value(x),
                    self.value(k),
                    g,
                    geom,
                    dx.as_deref_mut(),
                    dk.as_deref_mut(),
                );
                if let Some(dx) = dx {
                    out.push((x, dx));
                }
                if let Some(dk) = dk {
                    out.push((k, dk));
                }
            }
            &Op::FullyConnected {
                x,
                w,
                b,
                rows,
                din,
                dout,
            } => {
                if self.wants(x) {
                    let mut dx = vec![T::zero(); rows * din];
                    gemm(
                        rows,
                        dout,
                        din,
                        g,
                        false,
                        self.value(w),
                        true,
                        &mut dx,
                        false,
                    );
                    out.push((x, dx));
                }
                if self.wants(w) {
                    let mut dw = vec![T::zero(); din * dout];
                    gemm(
                        din,
                        rows,
                        dout,
                        self.value(x),
                        true,
                        g,
                        false,
                        &mut dw,
                        false,
                    );
                    out.push((w, dw));
                }
                if self.wants(b) {
                    out.push((b, column_sums(g, dout)));
                }
            }
            &Op::AddBias { x, b, cols } => {
                out.push((x, g.to_vec()));
                if self.wants(b) {
                    out.push((b, column_sums(g, cols)));
                }
            }
            &Op::Add { a, b } => {
                out.push((a, g.to_vec()));
                out.push((b, g.to_vec()));
            }
            &Op::Sub { a, b } => {
                out.push((a, g.to_vec()));
                out.push((b, g.iter().map(|&v| -v).collect()));
            }
            &Op::Mul { a, b } => {
                let (av, bv) = (self.value(a), self.value(b));
                out.push((a, g.iter().zip(bv).map(|(&gv, &y)| gv * y).collect()));
                out.push((b, g.iter().zip(av).map(|(&gv, &x)| gv * x).collect()));
            }
            &Op::Scale { x, s } => {
                let sv = T::c(s);
                out.push((x, g.iter().map(|&v| v * sv).collect()));
            }
            &Op::Lrelu { x, slope } => {
                let s = T::c(slope);
                let dx = g
                    .iter()
                    .zip(self.value(x))
                    .map(|(&gv, &xv)| if xv >= T::zero() { gv } else { gv * s })
                    .collect();
                out.push((x, dx));
            }
            &Op::Abs { x } => {
                // subgradient 0 at the kink
                let dx = g
                    .iter()
                    .zip(self.value(x))
                    .map(|(&gv, &xv)| {
                        if xv > T::zero() {
                            gv
                        } else if xv < T::zero() {
                            -gv
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                out.push((x, dx));
            }
            &Op::Sum { x } => {
                out.push((x, vec![g[0]; self.value(x).len()]));
            }
            &Op::Reshape { x } => out.push((x, g.to_vec())),
            Op::Permute { x, perm } => {
                let dx = kernels::permute(g, &node.shape, &kernels::inverse_perm(perm));
                out.push((*x, dx));
            }
            &Op::Concat { a, b, ca, cb } => {
                let rows = g.len() / (ca + cb).max(1);
                let mut da = Vec::with_capacity(rows * ca);
                let mut db = Vec::with_capacity(rows * cb);
                for r in g.chunks_exact(ca + cb) {
                    da.extend_from_slice(&r[..ca]);
                    db.extend_from_slice(&r[ca..]);
                }
                out.push((a, da));
                out.push((b, db));
            }
        }
        out
    }
}

fn column_sums<T: Real>(g: &[T], cols: usize) -> Vec<T> {
    let mut s = vec![T::zero(); cols];
    for r in g.chunks_exact(cols.max(1)) {
        for (acc, &v) in s.iter_mut().zip(r) {
            *acc += v;
        }
    }
    s
}
