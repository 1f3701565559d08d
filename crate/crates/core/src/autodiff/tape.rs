use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

/// Normalization axis for [`Tape::softmax_axis`].
///
/// `Rows` normalizes along each row (every row sums to 1); `Cols` normalizes
/// along each column (every column sums to 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Sigmoid { x: NodeId },
    Tanh { x: NodeId },
    SoftmaxAxis { x: NodeId, axis: Axis },
    ConcatRows { parts: Vec<NodeId> },
    ConcatCols { parts: Vec<NodeId> },
    SelectCol { x: NodeId, col: usize },
    Transpose { x: NodeId },
    Embed { table: NodeId, tokens: Vec<usize> },
    Dropout { x: NodeId, mask: Vec<Scalar> },
    ScaleByScalar { s: NodeId, x: NodeId },
    AffineConst { x: NodeId, a: Scalar },
    MeanAll { x: NodeId },
    NllPick { p: NodeId, index: usize },
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

enum Mode {
    Eval,
    Train { rng: ChaCha8Rng, dropout: Scalar },
}

/// Computation graph. Nodes are appended in construction order, which is a
/// topological order by construction; the backward pass walks them once in
/// reverse, accumulating gradients so parameters used several times (shared
/// embeddings, recurrent weights) sum their contributions.
pub struct Tape {
    nodes: Vec<Node>,
    mode: Mode,
}

impl Tape {
    /// Tape with dropout disabled (inference, loss evaluation, grad checks).
    pub fn eval() -> Self {
        Self {
            nodes: Vec::new(),
            mode: Mode::Eval,
        }
    }

    /// Tape with inverted dropout active at the given rate.
    pub fn train(rng: ChaCha8Rng, dropout: Scalar) -> Self {
        assert!((0.0..1.0).contains(&dropout), "dropout rate {dropout}");
        Self {
            nodes: Vec::new(),
            mode: Mode::Train { rng, dropout },
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        id
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Leaf that does not receive gradients.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf that accumulates gradients (a trainable parameter).
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).matmul(self.value(b));
        let rg = self.requires(a) || self.requires(b);
        self.push(value, Op::MatMul { a, b }, rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "add shape mismatch");
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(va.rows(), va.cols(), data).unwrap();
        let rg = self.requires(a) || self.requires(b);
        self.push(value, Op::Add { a, b }, rg)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "mul shape mismatch");
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(va.rows(), va.cols(), data).unwrap();
        let rg = self.requires(a) || self.requires(b);
        self.push(value, Op::Mul { a, b }, rg)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let data = v.data().iter().map(|&z| sigmoid(z)).collect();
        let value = Tensor::new(v.rows(), v.cols(), data).unwrap();
        let rg = self.requires(x);
        self.push(value, Op::Sigmoid { x }, rg)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let data = v.data().iter().map(|&z| z.tanh()).collect();
        let value = Tensor::new(v.rows(), v.cols(), data).unwrap();
        let rg = self.requires(x);
        self.push(value, Op::Tanh { x }, rg)
    }

    /// Numerically stabilized softmax along the given axis of a rank-2
    /// tensor. Rejects non-finite input.
    pub fn softmax_axis(&mut self, x: NodeId, axis: Axis) -> Result<NodeId> {
        let v = self.value(x);
        if !v.is_finite() {
            return Err(Error::NonFinite("softmax_axis input".into()));
        }
        let value = softmax_tensor(v, axis);
        let rg = self.requires(x);
        Ok(self.push(value, Op::SoftmaxAxis { x, axis }, rg))
    }

    /// Stack vertically; every part must have the same column count.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let cols = self.value(parts[0]).cols();
        let rows: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(v.data());
        }
        let value = Tensor::new(rows, cols, data).unwrap();
        let rg = parts.iter().any(|&p| self.requires(p));
        let parts = parts.to_vec();
        self.push(value, Op::ConcatRows { parts }, rg)
    }

    /// Stack horizontally; every part must have the same row count.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut value = Tensor::zeros(rows, cols);
        let mut at = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows(), rows, "concat_cols row mismatch");
            for i in 0..rows {
                for j in 0..v.cols() {
                    value.set(i, at + j, v.get(i, j));
                }
            }
            at += v.cols();
        }
        let rg = parts.iter().any(|&p| self.requires(p));
        let parts = parts.to_vec();
        self.push(value, Op::ConcatCols { parts }, rg)
    }

    /// Column `col` of a matrix as a column vector.
    pub fn select_col(&mut self, x: NodeId, col: usize) -> NodeId {
        let v = self.value(x);
        assert!(col < v.cols(), "select_col out of range");
        let value = Tensor::column(&v.col_vec(col));
        let rg = self.requires(x);
        self.push(value, Op::SelectCol { x, col }, rg)
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).transposed();
        let rg = self.requires(x);
        self.push(value, Op::Transpose { x }, rg)
    }

    /// Embedding lookup: column `tokens[t]` of `table` becomes column `t` of
    /// the output. Gradients accumulate per looked-up column, so repeated
    /// tokens sum their contributions.
    pub fn embed(&mut self, table: NodeId, tokens: &[usize]) -> NodeId {
        assert!(!tokens.is_empty(), "embed of no tokens");
        let v = self.value(table);
        let mut value = Tensor::zeros(v.rows(), tokens.len());
        for (t, &tok) in tokens.iter().enumerate() {
            assert!(tok < v.cols(), "token id {tok} outside table");
            for i in 0..v.rows() {
                value.set(i, t, v.get(i, tok));
            }
        }
        let rg = self.requires(table);
        let tokens = tokens.to_vec();
        self.push(value, Op::Embed { table, tokens }, rg)
    }

    /// Inverted dropout. Identity on an eval tape.
    pub fn dropout(&mut self, x: NodeId) -> NodeId {
        let (mask, rate) = match &mut self.mode {
            Mode::Eval => return x,
            Mode::Train { rng, dropout } => {
                if *dropout == 0.0 {
                    return x;
                }
                let keep = 1.0 - *dropout;
                let n = self.nodes[x.0].value.numel();
                let mask: Vec<Scalar> = (0..n)
                    .map(|_| {
                        if rng.gen::<Scalar>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect();
                (mask, *dropout)
            }
        };
        let _ = rate;
        let v = self.value(x);
        let data = v.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let value = Tensor::new(v.rows(), v.cols(), data).unwrap();
        let rg = self.requires(x);
        self.push(value, Op::Dropout { x, mask }, rg)
    }

    /// `s * x` where `s` is a `1x1` node.
    pub fn scale_by(&mut self, s: NodeId, x: NodeId) -> NodeId {
        let sv = self.value(s);
        assert_eq!(sv.shape(), (1, 1), "scale_by scalar must be 1x1");
        let sv = sv.item();
        let v = self.value(x);
        let data = v.data().iter().map(|a| a * sv).collect();
        let value = Tensor::new(v.rows(), v.cols(), data).unwrap();
        let rg = self.requires(s) || self.requires(x);
        self.push(value, Op::ScaleByScalar { s, x }, rg)
    }

    /// Elementwise `a * x + b` with constants.
    pub fn affine(&mut self, x: NodeId, a: Scalar, b: Scalar) -> NodeId {
        let v = self.value(x);
        let data = v.data().iter().map(|z| a * z + b).collect();
        let value = Tensor::new(v.rows(), v.cols(), data).unwrap();
        let rg = self.requires(x);
        self.push(value, Op::AffineConst { x, a }, rg)
    }

    /// Mean of all entries, as a `1x1` node.
    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let n = v.numel() as Scalar;
        let value = Tensor::scalar(v.data().iter().sum::<Scalar>() / n);
        let rg = self.requires(x);
        self.push(value, Op::MeanAll { x }, rg)
    }

    /// `-ln(p[index])` of a probability column vector, as a `1x1` node.
    /// The fused pick-and-log keeps the backward rule exact for mixed
    /// copy/generation distributions.
    pub fn nll_pick(&mut self, p: NodeId, index: usize) -> NodeId {
        let v = self.value(p);
        assert_eq!(v.cols(), 1, "nll_pick expects a column vector");
        assert!(index < v.rows(), "nll_pick index out of range");
        let value = Tensor::scalar(-v.data()[index].ln());
        let rg = self.requires(p);
        self.push(value, Op::NllPick { p, index }, rg)
    }

    /// Reverse pass from a scalar root. Gradients accumulate into every
    /// reachable node with `requires_grad`; read them back with [`Tape::grad`].
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        let shape = self.value(root).shape();
        if shape != (1, 1) {
            return Err(Error::ShapeMismatch {
                context: "backward root".into(),
                expected: "1x1 scalar".into(),
                got: format!("{}x{}", shape.0, shape.1),
            });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[root.0].grad = Some(Tensor::scalar(1.0));

        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad || self.nodes[i].grad.is_none() {
                continue;
            }
            let grad = self.nodes[i].grad.clone().unwrap();
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.requires(a) {
                        let da = grad.matmul(&self.nodes[b.0].value.transposed());
                        self.accumulate(a, da);
                    }
                    if self.requires(b) {
                        let db = self.nodes[a.0].value.transposed().matmul(&grad);
                        self.accumulate(b, db);
                    }
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.requires(a) {
                        self.accumulate(a, grad.clone());
                    }
                    if self.requires(b) {
                        self.accumulate(b, grad);
                    }
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    if self.requires(a) {
                        let da = elementwise(&grad, &self.nodes[b.0].value, |g, y| g * y);
                        self.accumulate(a, da);
                    }
                    if self.requires(b) {
                        let db = elementwise(&grad, &self.nodes[a.0].value, |g, x| g * x);
                        self.accumulate(b, db);
                    }
                }
                Op::Sigmoid { x } => {
                    let x = *x;
                    let dx = elementwise(&grad, &self.nodes[i].value, |g, s| g * s * (1.0 - s));
                    self.accumulate(x, dx);
                }
                Op::Tanh { x } => {
                    let x = *x;
                    let dx = elementwise(&grad, &self.nodes[i].value, |g, t| g * (1.0 - t * t));
                    self.accumulate(x, dx);
                }
                Op::SoftmaxAxis { x, axis } => {
                    let (x, axis) = (*x, *axis);
                    let dx = softmax_backward(&self.nodes[i].value, &grad, axis);
                    self.accumulate(x, dx);
                }
                Op::ConcatRows { parts } => {
                    let parts = parts.clone();
                    let mut at = 0;
                    for p in parts {
                        let r = self.nodes[p.0].value.rows();
                        let c = self.nodes[p.0].value.cols();
                        if self.requires(p) {
                            let mut dp = Tensor::zeros(r, c);
                            for ii in 0..r {
                                for jj in 0..c {
                                    dp.set(ii, jj, grad.get(at + ii, jj));
                                }
                            }
                            self.accumulate(p, dp);
                        }
                        at += r;
                    }
                }
                Op::ConcatCols { parts } => {
                    let parts = parts.clone();
                    let mut at = 0;
                    for p in parts {
                        let r = self.nodes[p.0].value.rows();
                        let c = self.nodes[p.0].value.cols();
                        if self.requires(p) {
                            let mut dp = Tensor::zeros(r, c);
                            for ii in 0..r {
                                for jj in 0..c {
                                    dp.set(ii, jj, grad.get(ii, at + jj));
                                }
                            }
                            self.accumulate(p, dp);
                        }
                        at += c;
                    }
                }
                Op::SelectCol { x, col } => {
                    let (x, col) = (*x, *col);
                    let v = &self.nodes[x.0].value;
                    let mut dx = Tensor::zeros(v.rows(), v.cols());
                    for ii in 0..dx.rows() {
                        dx.set(ii, col, grad.get(ii, 0));
                    }
                    self.accumulate(x, dx);
                }
                Op::Transpose { x } => {
                    let x = *x;
                    self.accumulate(x, grad.transposed());
                }
                Op::Embed { table, tokens } => {
                    let table = *table;
                    let tokens = tokens.clone();
                    let v = &self.nodes[table.0].value;
                    let mut dt = Tensor::zeros(v.rows(), v.cols());
                    for (t, &tok) in tokens.iter().enumerate() {
                        for ii in 0..dt.rows() {
                            let cur = dt.get(ii, tok);
                            dt.set(ii, tok, cur + grad.get(ii, t));
                        }
                    }
                    self.accumulate(table, dt);
                }
                Op::Dropout { x, mask } => {
                    let x = *x;
                    let mask = mask.clone();
                    let v = &self.nodes[i].value;
                    let data: Vec<Scalar> = grad
                        .data()
                        .iter()
                        .zip(&mask)
                        .map(|(g, m)| g * m)
                        .collect();
                    let dx = Tensor::new(v.rows(), v.cols(), data).unwrap();
                    self.accumulate(x, dx);
                }
                Op::ScaleByScalar { s, x } => {
                    let (s, x) = (*s, *x);
                    let sv = self.nodes[s.0].value.item();
                    if self.requires(x) {
                        let dx = elementwise(&grad, &self.nodes[x.0].value, |g, _| g * sv);
                        self.accumulate(x, dx);
                    }
                    if self.requires(s) {
                        let ds: Scalar = grad
                            .data()
                            .iter()
                            .zip(self.nodes[x.0].value.data())
                            .map(|(g, v)| g * v)
                            .sum();
                        self.accumulate(s, Tensor::scalar(ds));
                    }
                }
                Op::AffineConst { x, a, .. } => {
                    let (x, a) = (*x, *a);
                    let dx = elementwise(&grad, &self.nodes[i].value, |g, _| g * a);
                    self.accumulate(x, dx);
                }
                Op::MeanAll { x } => {
                    let x = *x;
                    let v = &self.nodes[x.0].value;
                    let g = grad.item() / v.numel() as Scalar;
                    let dx = Tensor::new(v.rows(), v.cols(), vec![g; v.numel()]).unwrap();
                    self.accumulate(x, dx);
                }
                Op::NllPick { p, index } => {
                    let (p, index) = (*p, *index);
                    let v = &self.nodes[p.0].value;
                    let mut dp = Tensor::zeros(v.rows(), 1);
                    dp.set(index, 0, -grad.item() / v.data()[index]);
                    self.accumulate(p, dp);
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, delta: Tensor) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut self.nodes[id.0].grad {
            Some(g) => {
                debug_assert_eq!(g.shape(), delta.shape());
                for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            None => self.nodes[id.0].grad = Some(delta),
        }
    }
}

pub(crate) fn sigmoid(z: Scalar) -> Scalar {
    1.0 / (1.0 + (-z).exp())
}

/// Max-subtracted softmax of a rank-2 tensor, outside the graph.
pub fn softmax_tensor(v: &Tensor, axis: Axis) -> Tensor {
    let mut out = Tensor::zeros(v.rows(), v.cols());
    match axis {
        Axis::Rows => {
            for i in 0..v.rows() {
                let lane: Vec<Scalar> = (0..v.cols()).map(|j| v.get(i, j)).collect();
                let soft = softmax_lane(&lane);
                for (j, s) in soft.into_iter().enumerate() {
                    out.set(i, j, s);
                }
            }
        }
        Axis::Cols => {
            for j in 0..v.cols() {
                let lane: Vec<Scalar> = (0..v.rows()).map(|i| v.get(i, j)).collect();
                let soft = softmax_lane(&lane);
                for (i, s) in soft.into_iter().enumerate() {
                    out.set(i, j, s);
                }
            }
        }
    }
    out
}

pub(crate) fn softmax_lane(lane: &[Scalar]) -> Vec<Scalar> {
    let max = lane.iter().cloned().fold(Scalar::NEG_INFINITY, Scalar::max);
    let exps: Vec<Scalar> = lane.iter().map(|&z| (z - max).exp()).collect();
    let sum: Scalar = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn softmax_backward(out: &Tensor, grad: &Tensor, axis: Axis) -> Tensor {
    let mut dx = Tensor::zeros(out.rows(), out.cols());
    let lanes: Vec<Vec<(usize, usize)>> = match axis {
        Axis::Rows => (0..out.rows())
            .map(|i| (0..out.cols()).map(|j| (i, j)).collect())
            .collect(),
        Axis::Cols => (0..out.cols())
            .map(|j| (0..out.rows()).map(|i| (i, j)).collect())
            .collect(),
    };
    for lane in lanes {
        let dot: Scalar = lane
            .iter()
            .map(|&(i, j)| grad.get(i, j) * out.get(i, j))
            .sum();
        for (i, j) in lane {
            dx.set(i, j, out.get(i, j) * (grad.get(i, j) - dot));
        }
    }
    dx
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(Scalar, Scalar) -> Scalar) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::new(a.rows(), a.cols(), data).unwrap()
}
