//! Reverse-mode differentiation over a flat, topologically ordered record of
//! primitive ops.

use alloc::borrow::Cow;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{matmul_nt_into, matmul_tn_into, Tensor};
use crate::math;
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    Sigmoid(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols { input: usize, start: usize },
    GatherRows { table: usize, rows: Vec<usize> },
    SelectRows { mask: Vec<bool>, on: usize, off: usize },
    MaxPool { inputs: Vec<usize>, argmax: Vec<usize> },
    SoftmaxXent { logits: usize, targets: Vec<usize>, weights: Vec<f64>, probs: Tensor },
    Sum(usize),
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Records a computation so gradients can be propagated back through it.
///
/// Parameters are borrowed for the lifetime of the tape, so binding a large
/// model costs no copies. Nodes are appended in evaluation order, which is a
/// valid topological order for the backward sweep.
#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

fn shape_err(op: &'static str, detail: alloc::string::String) -> Error {
    Error::Shape { op, detail }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: usize) -> bool {
        self.nodes[v].requires_grad
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// An owned input that receives a gradient.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A borrowed parameter; `trainable` decides whether it gets a gradient.
    pub fn param(&mut self, value: &'p Tensor, trainable: bool) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
            requires_grad: trainable,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(out, Op::MatMul(a.0, b.0), rg))
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_dims(tb) {
            return Err(shape_err(op, alloc::format!("{:?} vs {:?}", ta.dims(), tb.dims())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(out, Op::Add(a.0, b.0), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(out, Op::Sub(a.0, b.0), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(out, Op::Mul(a.0, b.0), rg))
    }

    /// Adds a `1 x n` row to every row of an `m x n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        let (m, n) = ta.dims();
        if tr.dims() != (1, n) {
            return Err(shape_err("add_row", alloc::format!("{m}x{n} plus row {:?}", tr.dims())));
        }
        let mut out = ta.clone().into_data();
        for chunk in out.chunks_mut(n.max(1)) {
            for (o, &r) in chunk.iter_mut().zip(tr.data()) {
                *o += r;
            }
        }
        let out = Tensor::from_rows(m, n, out)?;
        let rg = self.rg(a.0) || self.rg(row.0);
        Ok(self.push(out, Op::AddRow(a.0, row.0), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        let rg = self.rg(a.0);
        self.push(out, Op::Scale(a.0, k), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(math::tanh);
        let rg = self.rg(a.0);
        self.push(out, Op::Tanh(a.0), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(math::sigmoid);
        let rg = self.rg(a.0);
        self.push(out, Op::Sigmoid(a.0), rg)
    }

    /// Joins matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(shape_err("concat_cols", "no inputs".into()));
        };
        let m = self.value(*first).rows();
        let mut n = 0;
        for p in parts {
            let (r, c) = self.value(*p).dims();
            if r != m {
                return Err(shape_err("concat_cols", alloc::format!("row counts {m} and {r}")));
            }
            n += c;
        }
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            for p in parts {
                out.extend_from_slice(self.value(*p).row(r));
            }
        }
        let out = Tensor::from_rows(m, n, out)?;
        let rg = parts.iter().any(|p| self.rg(p.0));
        Ok(self.push(out, Op::ConcatCols(parts.iter().map(|p| p.0).collect()), rg))
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(shape_err("concat_rows", "no inputs".into()));
        };
        let n = self.value(*first).cols();
        let mut m = 0;
        let mut out = Vec::new();
        for p in parts {
            let t = self.value(*p);
            let (r, c) = t.dims();
            if c != n {
                return Err(shape_err("concat_rows", alloc::format!("column counts {n} and {c}")));
            }
            m += r;
            out.extend_from_slice(t.data());
        }
        let out = Tensor::from_rows(m, n, out)?;
        let rg = parts.iter().any(|p| self.rg(p.0));
        Ok(self.push(out, Op::ConcatRows(parts.iter().map(|p| p.0).collect()), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = t.dims();
        if start + len > n {
            return Err(shape_err(
                "slice_cols",
                alloc::format!("columns {start}..{} of a {m}x{n} matrix", start + len),
            ));
        }
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&t.row(r)[start..start + len]);
        }
        let out = Tensor::from_rows(m, len, out)?;
        let rg = self.rg(a.0);
        Ok(self.push(out, Op::SliceCols { input: a.0, start }, rg))
    }

    /// Copies the listed rows of `table` into a new matrix. Serves as the
    /// embedding lookup and as row selection.
    pub fn gather_rows(&mut self, table: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (m, n) = t.dims();
        let mut out = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if r >= m {
                return Err(Error::IndexOutOfRange {
                    what: "gather_rows table",
                    index: r,
                    size: m,
                });
            }
            out.extend_from_slice(t.row(r));
        }
        let out = Tensor::from_rows(rows.len(), n, out)?;
        let rg = self.rg(table.0);
        Ok(self.push(out, Op::GatherRows { table: table.0, rows: rows.to_vec() }, rg))
    }

    /// Row `i` of the result is row `i` of `on` where `mask[i]`, else of `off`.
    pub fn select_rows(&mut self, mask: &[bool], on: Var, off: Var) -> Result<Var> {
        let (a, b) = (self.value(on), self.value(off));
        if !a.same_dims(b) || a.rows() != mask.len() {
            return Err(shape_err(
                "select_rows",
                alloc::format!("{:?} / {:?} with mask of {}", a.dims(), b.dims(), mask.len()),
            ));
        }
        let n = a.cols();
        let mut out = Vec::with_capacity(a.len());
        for (r, &m) in mask.iter().enumerate() {
            out.extend_from_slice(if m { a.row(r) } else { b.row(r) });
        }
        let out = Tensor::from_rows(mask.len(), n, out)?;
        let rg = self.rg(on.0) || self.rg(off.0);
        Ok(self.push(out, Op::SelectRows { mask: mask.to_vec(), on: on.0, off: off.0 }, rg))
    }

    /// Per-row, per-column maximum over time steps `inputs[..lengths[row]]`.
    /// Each input is `rows x cols`; steps past a row's length are ignored.
    pub fn max_pool(&mut self, inputs: &[Var], lengths: &[usize]) -> Result<Var> {
        let Some(first) = inputs.first() else {
            return Err(shape_err("max_pool", "no time steps".into()));
        };
        let (m, n) = self.value(*first).dims();
        if lengths.len() != m {
            return Err(shape_err("max_pool", alloc::format!("{} lengths for {m} rows", lengths.len())));
        }
        for v in inputs {
            if self.value(*v).dims() != (m, n) {
                return Err(shape_err("max_pool", alloc::format!("step of shape {:?}", self.value(*v).dims())));
            }
        }
        if let Some(&bad) = lengths.iter().find(|&&l| l == 0 || l > inputs.len()) {
            return Err(shape_err("max_pool", alloc::format!("row length {bad} outside 1..={}", inputs.len())));
        }
        let mut out = vec![f64::NEG_INFINITY; m * n];
        let mut argmax = vec![0usize; m * n];
        for (t, v) in inputs.iter().enumerate() {
            let val = self.value(*v).data();
            for r in 0..m {
                if t >= lengths[r] {
                    continue;
                }
                for c in 0..n {
                    let i = r * n + c;
                    if val[i] > out[i] || t == 0 {
                        out[i] = val[i];
                        argmax[i] = t;
                    }
                }
            }
        }
        let out = Tensor::from_rows(m, n, out)?;
        let rg = inputs.iter().any(|v| self.rg(v.0));
        Ok(self.push(
            out,
            Op::MaxPool {
                inputs: inputs.iter().map(|v| v.0).collect(),
                argmax,
            },
            rg,
        ))
    }

    /// Weighted per-row cross-entropy `-w_r * log softmax(logits_r)[target_r]`
    /// as an `rows x 1` column.
    pub fn softmax_xent(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Result<Var> {
        let t = self.value(logits);
        let (m, n) = t.dims();
        if targets.len() != m || weights.len() != m {
            return Err(shape_err(
                "softmax_xent",
                alloc::format!("{m} rows with {} targets and {} weights", targets.len(), weights.len()),
            ));
        }
        let mut probs = Vec::with_capacity(m * n);
        let mut losses = Vec::with_capacity(m);
        for r in 0..m {
            let row = t.row(r);
            let target = targets[r];
            if target >= n {
                return Err(Error::IndexOutOfRange {
                    what: "softmax_xent classes",
                    index: target,
                    size: n,
                });
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for &x in row {
                z += math::exp(x - max);
            }
            let log_z = math::ln(z);
            for &x in row {
                probs.push(math::exp(x - max - log_z));
            }
            let loss = -(row[target] - max - log_z);
            losses.push(if weights[r] == 0.0 { 0.0 } else { weights[r] * loss });
        }
        let probs = Tensor::from_rows(m, n, probs)?;
        let out = Tensor::from_rows(m, 1, losses)?;
        let rg = self.rg(logits.0);
        Ok(self.push(
            out,
            Op::SoftmaxXent {
                logits: logits.0,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Sum of all elements as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a.0);
        self.push(Tensor::scalar(s), Op::Sum(a.0), rg)
    }

    /// Propagates a gradient of ones from `root` back through the tape.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let root_value = self.value(root);
        grads[root.0] = Some(Tensor::filled(root_value.rows(), root_value.cols(), 1.0));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let (before, rest) = grads.split_at_mut(i);
            let Some(g) = rest[0].as_ref() else { continue };
            self.propagate(&node.op, &node.value, g, before);
        }
        Gradients { grads }
    }

    fn acc<'a>(&self, before: &'a mut [Option<Tensor>], j: usize) -> Option<&'a mut Tensor> {
        if !self.nodes[j].requires_grad {
            return None;
        }
        let slot = &mut before[j];
        if slot.is_none() {
            let v = &self.nodes[j].value;
            *slot = Some(Tensor::new(v.shape().to_vec(), vec![0.0; v.len()]).expect("shape"));
        }
        slot.as_mut()
    }

    fn propagate(&self, op: &Op, y: &Tensor, g: &Tensor, before: &mut [Option<Tensor>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.nodes[*a].value.as_ref(), self.nodes[*b].value.as_ref());
                let (m, k) = ta.dims();
                let n = tb.cols();
                if let Some(ga) = self.acc(before, *a) {
                    matmul_nt_into(g.data(), tb.data(), ga.data_mut(), m, k, n);
                }
                if let Some(gb) = self.acc(before, *b) {
                    matmul_tn_into(ta.data(), g.data(), gb.data_mut(), m, k, n);
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.acc(before, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.acc(before, *b) {
                    gb.add_assign(g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.acc(before, *a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = self.acc(before, *b) {
                    for (o, &x) in gb.data_mut().iter_mut().zip(g.data()) {
                        *o -= x;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.nodes[*a].value.as_ref(), self.nodes[*b].value.as_ref());
                if let Some(ga) = self.acc(before, *a) {
                    for ((o, &x), &w) in ga.data_mut().iter_mut().zip(g.data()).zip(tb.data()) {
                        *o += x * w;
                    }
                }
                if let Some(gb) = self.acc(before, *b) {
                    for ((o, &x), &w) in gb.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                        *o += x * w;
                    }
                }
            }
            Op::AddRow(a, row) => {
                if let Some(ga) = self.acc(before, *a) {
                    ga.add_assign(g);
                }
                if let Some(gr) = self.acc(before, *row) {
                    let n = g.cols();
                    for r in 0..g.rows() {
                        for (o, &x) in gr.data_mut().iter_mut().zip(&g.data()[r * n..(r + 1) * n]) {
                            *o += x;
                        }
                    }
                }
            }
            Op::Scale(a, k) => {
                if let Some(ga) = self.acc(before, *a) {
                    for (o, &x) in ga.data_mut().iter_mut().zip(g.data()) {
                        *o += k * x;
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = self.acc(before, *a) {
                    for ((o, &x), &yv) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *o += x * (1.0 - yv * yv);
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.acc(before, *a) {
                    for ((o, &x), &yv) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *o += x * yv * (1.0 - yv);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let n = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let width = self.nodes[p].value.cols();
                    if let Some(gp) = self.acc(before, p) {
                        for r in 0..g.rows() {
                            let src = &g.data()[r * n + offset..r * n + offset + width];
                            for (o, &x) in gp.row_mut(r).iter_mut().zip(src) {
                                *o += x;
                            }
                        }
                    }
                    offset += width;
                }
            }
            Op::ConcatRows(parts) => {
                let n = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let height = self.nodes[p].value.rows();
                    if let Some(gp) = self.acc(before, p) {
                        let src = &g.data()[offset * n..(offset + height) * n];
                        for (o, &x) in gp.data_mut().iter_mut().zip(src) {
                            *o += x;
                        }
                    }
                    offset += height;
                }
            }
            Op::SliceCols { input, start } => {
                if let Some(gi) = self.acc(before, *input) {
                    let width = g.cols();
                    for r in 0..g.rows() {
                        let dst = &mut gi.row_mut(r)[*start..*start + width];
                        for (o, &x) in dst.iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                }
            }
            Op::GatherRows { table, rows } => {
                if let Some(gt) = self.acc(before, *table) {
                    for (i, &r) in rows.iter().enumerate() {
                        for (o, &x) in gt.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                }
            }
            Op::SelectRows { mask, on, off } => {
                for (target, want) in [(*on, true), (*off, false)] {
                    if let Some(gt) = self.acc(before, target) {
                        for (r, &m) in mask.iter().enumerate() {
                            if m == want {
                                for (o, &x) in gt.row_mut(r).iter_mut().zip(g.row(r)) {
                                    *o += x;
                                }
                            }
                        }
                    }
                }
            }
            Op::MaxPool { inputs, argmax } => {
                for (t, &v) in inputs.iter().enumerate() {
                    if let Some(gv) = self.acc(before, v) {
                        for ((o, &x), &am) in gv.data_mut().iter_mut().zip(g.data()).zip(argmax) {
                            if am == t {
                                *o += x;
                            }
                        }
                    }
                }
            }
            Op::SoftmaxXent {
                logits,
                targets,
                weights,
                probs,
            } => {
                if let Some(gl) = self.acc(before, *logits) {
                    let n = probs.cols();
                    for (r, (&target, &w)) in targets.iter().zip(weights).enumerate() {
                        let scale = g.data()[r] * w;
                        if scale == 0.0 {
                            continue;
                        }
                        let dst = &mut gl.data_mut()[r * n..(r + 1) * n];
                        for (c, (o, &p)) in dst.iter_mut().zip(probs.row(r)).enumerate() {
                            let onehot = if c == target { 1.0 } else { 0.0 };
                            *o += scale * (p - onehot);
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.acc(before, *a) {
                    let s = g.item();
                    for o in ga.data_mut() {
                        *o += s;
                    }
                }
            }
        }
    }
}

/// Gradients of one backward sweep, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when the node was unreachable from the root or needs no grad.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
