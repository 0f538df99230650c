//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends one node whose parents already exist, so node
//! ids are a topological order and the backward sweep is a single reverse
//! pass over the node list. A tape lives for one forward/backward pass.

use super::tensor::{matmul_nt, matmul_raw, matmul_tn, Tensor};
use crate::error::{BdgError, Result};

/// Probability floor applied inside every `log`.
pub const LOG_EPS: f64 = 1e-7;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    MeanAll,
    MeanRows,
    Sum,
    L1Norm,
    L2Norm,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(BinaryKind, Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Unary(Activation, Var),
    SoftmaxRows(Var),
    Reduce(Reduction, Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Record of executed operations for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Option<Vec<Option<Tensor>>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a tracked leaf; its gradient is available after `backward`.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Registers a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of the last backward pass, if `v` was reached.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.as_ref()?.get(v.0)?.as_ref()
    }

    /// Drops stored gradients so that `backward` may run again.
    pub fn reset_grads(&mut self) {
        self.grads = None;
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, parents: &[Var]) -> bool {
        parents.iter().any(|p| self.nodes[p.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.is_matrix() || !bv.is_matrix() || av.cols() != bv.rows() {
            return Err(BdgError::Dimension {
                op: "matmul",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let out = matmul_raw(av, bv);
        let rg = self.tracked(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// Pointwise `a ∘ b`; shapes must agree unless one side is a scalar.
    pub fn binary(&mut self, a: Var, b: Var, kind: BinaryKind) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let f = |x: f64, y: f64| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
        };
        let out = if av.shape() == bv.shape() {
            let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(av.shape().to_vec(), data)?
        } else if bv.is_scalar() {
            let y = bv.item();
            av.map(|x| f(x, y))
        } else if av.is_scalar() {
            let x = av.item();
            bv.map(|y| f(x, y))
        } else {
            return Err(BdgError::Dimension {
                op: "elementwise",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        };
        let rg = self.tracked(&[a, b]);
        Ok(self.push(out, Op::Binary(kind, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Mul)
    }

    /// Adds a `1×n` row to every row of an `m×n` matrix (linear-layer bias).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if !av.is_matrix() || rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(BdgError::Dimension {
                op: "add_row",
                lhs: av.shape().to_vec(),
                rhs: rv.shape().to_vec(),
            });
        }
        let n = av.cols();
        let r = rv.data();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + r[i % n])
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.tracked(&[a, row]);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    /// Multiplies by a fixed constant.
    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        let rg = self.tracked(&[a]);
        self.push(out, Op::Scale(a, factor), rg)
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Result<Var> {
        let av = self.value(a);
        if !av.all_finite() {
            return Err(BdgError::Divergence(format!("non-finite input to {kind:?}")));
        }
        let out = match kind {
            Activation::Relu => av.map(|x| x.max(0.0)),
            Activation::Tanh => av.map(f64::tanh),
            Activation::Sigmoid => av.map(sigmoid),
            Activation::Log => av.map(|x| x.max(LOG_EPS).ln()),
        };
        let rg = self.tracked(&[a]);
        Ok(self.push(out, Op::Unary(kind, a), rg))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Relu)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Sigmoid)
    }

    /// Natural log with inputs clamped at [`LOG_EPS`].
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Log)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if !av.is_matrix() || av.cols() == 0 {
            return Err(BdgError::Dimension {
                op: "softmax_rows",
                lhs: av.shape().to_vec(),
                rhs: vec![],
            });
        }
        let c = av.cols();
        let mut data = Vec::with_capacity(av.numel());
        for r in 0..av.rows() {
            let row = av.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let start = data.len();
            data.extend(row.iter().map(|&x| (x - max).exp()));
            let total: f64 = data[start..].iter().sum();
            for v in &mut data[start..] {
                *v /= total;
            }
        }
        let out = Tensor::new(vec![av.rows(), c], data)?;
        let rg = self.tracked(&[a]);
        Ok(self.push(out, Op::SoftmaxRows(a), rg))
    }

    pub fn reduce(&mut self, a: Var, kind: Reduction) -> Result<Var> {
        let av = self.value(a);
        let out = match kind {
            Reduction::MeanAll => {
                if av.numel() == 0 {
                    return Err(BdgError::DegenerateBatch("mean_all"));
                }
                Tensor::scalar(av.sum() / av.numel() as f64)
            }
            Reduction::MeanRows => {
                if !av.is_matrix() {
                    return Err(BdgError::Dimension {
                        op: "mean_rows",
                        lhs: av.shape().to_vec(),
                        rhs: vec![],
                    });
                }
                let (m, n) = (av.rows(), av.cols());
                if m == 0 {
                    return Err(BdgError::DegenerateBatch("mean_rows"));
                }
                let mut acc = vec![0.0; n];
                for r in 0..m {
                    for (s, &x) in acc.iter_mut().zip(av.row(r)) {
                        *s += x;
                    }
                }
                for s in &mut acc {
                    *s /= m as f64;
                }
                Tensor::matrix(1, n, acc)?
            }
            Reduction::Sum => Tensor::scalar(av.sum()),
            Reduction::L1Norm => Tensor::scalar(av.data().iter().map(|x| x.abs()).sum()),
            Reduction::L2Norm => {
                Tensor::scalar(av.data().iter().map(|x| x * x).sum::<f64>().sqrt())
            }
        };
        let rg = self.tracked(&[a]);
        Ok(self.push(out, Op::Reduce(kind, a), rg))
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        self.reduce(a, Reduction::MeanAll)
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        self.reduce(a, Reduction::MeanRows)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.reduce(a, Reduction::Sum)
    }

    pub fn l1_norm(&mut self, a: Var) -> Result<Var> {
        self.reduce(a, Reduction::L1Norm)
    }

    pub fn l2_norm(&mut self, a: Var) -> Result<Var> {
        self.reduce(a, Reduction::L2Norm)
    }

    /// Propagates d(loss)/d(node) to every tracked node reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.grads.is_some() {
            return Err(BdgError::Contract(
                "backward already ran on this tape; call reset_grads first".into(),
            ));
        }
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(BdgError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            for (parent, contrib) in self.local_grads(id, &g) {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut grads[parent.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
            grads[id] = Some(g);
        }
        self.grads = Some(grads);
        Ok(())
    }

    /// Vector-Jacobian products of node `id` against upstream gradient `g`.
    fn local_grads(&self, id: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[id];
        match node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                vec![(a, matmul_nt(g, bv)), (b, matmul_tn(av, g))]
            }
            Op::Binary(kind, a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                let (ga, gb) = match kind {
                    BinaryKind::Add => (g.clone(), g.clone()),
                    BinaryKind::Sub => (g.clone(), g.map(|x| -x)),
                    BinaryKind::Mul => (
                        pointwise(g, bv, |gi, y| gi * y),
                        pointwise(g, av, |gi, x| gi * x),
                    ),
                };
                vec![(a, fold_to(ga, av)), (b, fold_to(gb, bv))]
            }
            Op::AddRow(a, row) => {
                let n = g.cols();
                let mut acc = vec![0.0; n];
                for (i, &gi) in g.data().iter().enumerate() {
                    acc[i % n] += gi;
                }
                let rshape = self.value(row).shape().to_vec();
                vec![
                    (a, g.clone()),
                    (row, Tensor::new(rshape, acc).expect("row shape")),
                ]
            }
            Op::Scale(a, factor) => vec![(a, g.map(|x| x * factor))],
            Op::Unary(kind, a) => {
                let x = self.value(a);
                let y = &node.value;
                let d = match kind {
                    Activation::Relu => pointwise(g, x, |gi, xi| if xi > 0.0 { gi } else { 0.0 }),
                    Activation::Tanh => pointwise(g, y, |gi, yi| gi * (1.0 - yi * yi)),
                    Activation::Sigmoid => pointwise(g, y, |gi, yi| gi * yi * (1.0 - yi)),
                    Activation::Log => {
                        pointwise(g, x, |gi, xi| if xi > LOG_EPS { gi / xi } else { 0.0 })
                    }
                };
                vec![(a, d)]
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let c = y.cols();
                let mut out = vec![0.0; y.numel()];
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..c {
                        out[r * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                vec![(a, Tensor::new(y.shape().to_vec(), out).expect("softmax shape"))]
            }
            Op::Reduce(kind, a) => {
                let x = self.value(a);
                let d = match kind {
                    Reduction::MeanAll => {
                        let s = g.item() / x.numel() as f64;
                        x.map(|_| s)
                    }
                    Reduction::Sum => {
                        let s = g.item();
                        x.map(|_| s)
                    }
                    Reduction::MeanRows => {
                        let (m, n) = (x.rows(), x.cols());
                        let gr = g.data();
                        let data = (0..m * n).map(|i| gr[i % n] / m as f64).collect();
                        Tensor::new(x.shape().to_vec(), data).expect("mean_rows shape")
                    }
                    Reduction::L1Norm => {
                        let s = g.item();
                        x.map(|v| s * sign(v))
                    }
                    Reduction::L2Norm => {
                        let norm = node.value.item();
                        if norm == 0.0 {
                            Tensor::zeros(x.shape())
                        } else {
                            let s = g.item() / norm;
                            x.map(|v| s * v)
                        }
                    }
                };
                vec![(a, d)]
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Pointwise combine where `other` may be a broadcast scalar.
fn pointwise(g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if other.is_scalar() && g.numel() != 1 {
        let y = other.item();
        g.map(|gi| f(gi, y))
    } else {
        let data = g.data().iter().zip(other.data()).map(|(&a, &b)| f(a, b)).collect();
        Tensor::new(g.shape().to_vec(), data).expect("pointwise shape")
    }
}

/// Sums a broadcast gradient back down to the operand's shape.
fn fold_to(grad: Tensor, operand: &Tensor) -> Tensor {
    if grad.shape() == operand.shape() {
        grad
    } else {
        Tensor::filled(operand.shape(), grad.sum())
    }
}
