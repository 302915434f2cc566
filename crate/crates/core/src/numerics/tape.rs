//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value. `backward`
//! walks the tape in reverse and accumulates vector-Jacobian products into
//! the nodes that require gradients. Constants (frozen weights, cached
//! backbone activations) never receive gradients and cost nothing in the
//! reverse pass.

use super::tensor::{row_moments, Tensor};
use crate::error::{GmemError, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
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
    MatMulT(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    Scale(usize, f64),
    OneMinus(usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Abs(usize),
    Softmax(usize),
    CausalSoftmax(usize),
    LogSoftmax(usize),
    LayerNorm { x: usize, inv_std: Vec<f64> },
    Concat(usize, usize),
    SliceCols { x: usize, start: usize },
    GatherRows { table: usize, ids: Vec<usize> },
    Transpose(usize),
    Sum(usize),
    Mean(usize),
    MeanRows(usize),
    CrossEntropy { logits: usize, probs: Tensor, targets: Vec<usize>, mask: Vec<bool>, count: usize },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulT(..) => "matmul_t",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::MulRow(..) => "mul_row",
            Op::Scale(..) => "scale",
            Op::OneMinus(..) => "one_minus",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Relu(..) => "relu",
            Op::Abs(..) => "abs",
            Op::Softmax(..) => "softmax_rows",
            Op::CausalSoftmax(..) => "causal_softmax_rows",
            Op::LogSoftmax(..) => "log_softmax_rows",
            Op::LayerNorm { .. } => "layernorm_rows",
            Op::Concat(..) => "concat_last_dim",
            Op::SliceCols { .. } => "slice_cols",
            Op::GatherRows { .. } => "gather_rows",
            Op::Transpose(..) => "transpose",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::MeanRows(..) => "mean_rows",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    label: Option<String>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

pub const LAYERNORM_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            label: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: usize) -> bool {
        self.nodes[v].requires_grad
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Attaches a human-readable name used in non-finite diagnostics.
    pub fn label(&mut self, v: Var, name: impl Into<String>) {
        self.nodes[v.0].label = Some(name.into());
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Copies `v` into a new constant, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    /// First node (in recording order) holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        self.nodes.iter().enumerate().find(|(_, n)| !n.value.is_finite()).map(|(i, n)| {
            let name = n.label.clone().unwrap_or_else(|| n.op.name().to_string());
            format!("node {} ({}) shape {:?}", i, name, n.value.shape())
        })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(v, Op::MatMul(a.0, b.0), rg))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_t(self.value(b))?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(v, Op::MatMulT(a.0, b.0), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(v, Op::Add(a.0, b.0), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(v, Op::Sub(a.0, b.0), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).mul(self.value(b))?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(v, Op::Mul(a.0, b.0), rg))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let v = self.value(a).add_row(self.value(row))?;
        let rg = self.rg(a.0) || self.rg(row.0);
        Ok(self.push(v, Op::AddRow(a.0, row.0), rg))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let v = self.value(a).mul_row(self.value(row))?;
        let rg = self.rg(a.0) || self.rg(row.0);
        Ok(self.push(v, Op::MulRow(a.0, row.0), rg))
    }

    /// `a · w + bias` with `bias` a `[1×n]` row.
    pub fn affine(&mut self, a: Var, w: Var, bias: Var) -> Result<Var> {
        let y = self.matmul(a, w)?;
        self.add_row(y, bias)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.value(a).scale(factor);
        let rg = self.rg(a.0);
        self.push(v, Op::Scale(a.0, factor), rg)
    }

    /// `1 − a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 - x);
        let rg = self.rg(a.0);
        self.push(v, Op::OneMinus(a.0), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).sigmoid();
        let rg = self.rg(a.0);
        self.push(v, Op::Sigmoid(a.0), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).tanh();
        let rg = self.rg(a.0);
        self.push(v, Op::Tanh(a.0), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).relu();
        let rg = self.rg(a.0);
        self.push(v, Op::Relu(a.0), rg)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::abs);
        let rg = self.rg(a.0);
        self.push(v, Op::Abs(a.0), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).softmax_rows()?;
        let rg = self.rg(a.0);
        Ok(self.push(v, Op::Softmax(a.0), rg))
    }

    pub fn causal_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).causal_softmax_rows()?;
        let rg = self.rg(a.0);
        Ok(self.push(v, Op::CausalSoftmax(a.0), rg))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).log_softmax_rows()?;
        let rg = self.rg(a.0);
        Ok(self.push(v, Op::LogSoftmax(a.0), rg))
    }

    pub fn layernorm_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let v = x.layernorm_rows(LAYERNORM_EPS)?;
        let n = x.cols();
        let inv_std = x.data().chunks(n).map(|r| row_moments(r, LAYERNORM_EPS).1).collect();
        let rg = self.rg(a.0);
        Ok(self.push(v, Op::LayerNorm { x: a.0, inv_std }, rg))
    }

    pub fn concat_last_dim(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).concat_last_dim(self.value(b))?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(v, Op::Concat(a.0, b.0), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(a).slice_cols(start, len)?;
        let rg = self.rg(a.0);
        Ok(self.push(v, Op::SliceCols { x: a.0, start }, rg))
    }

    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let v = self.value(table).gather_rows(ids)?;
        let rg = self.rg(table.0);
        Ok(self.push(v, Op::GatherRows { table: table.0, ids: ids.to_vec() }, rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose()?;
        let rg = self.rg(a.0);
        Ok(self.push(v, Op::Transpose(a.0), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a.0);
        self.push(v, Op::Sum(a.0), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = Tensor::scalar(x.sum() / x.numel() as f64);
        let rg = self.rg(a.0);
        self.push(v, Op::Mean(a.0), rg)
    }

    /// Column means as a `[1×n]` row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).mean_rows()?;
        let rg = self.rg(a.0);
        Ok(self.push(v, Op::MeanRows(a.0), rg))
    }

    /// Mean negative log-likelihood of `targets[t]` under `softmax(logits[t])`
    /// over the rows where `mask[t]` is set.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let x = self.value(logits);
        let (rows, vocab) = (x.rows(), x.cols());
        if x.shape().len() != 2 || targets.len() != rows || mask.len() != rows {
            return Err(GmemError::dim(
                "cross_entropy",
                format!(
                    "logits {:?} with {} targets and {} mask entries",
                    x.shape(),
                    targets.len(),
                    mask.len()
                ),
            ));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(GmemError::Input("cross_entropy mask selects no positions".into()));
        }
        let log_probs = x.log_softmax_rows()?;
        let mut total = 0.0;
        for (t, (&target, &m)) in targets.iter().zip(mask).enumerate() {
            if !m {
                continue;
            }
            if target >= vocab {
                return Err(GmemError::Input(format!("target id {target} outside vocabulary of {vocab}")));
            }
            total -= log_probs.get(t, target);
        }
        let probs = log_probs.map(f64::exp);
        let rg = self.rg(logits.0);
        Ok(self.push(
            Tensor::scalar(total / count as f64),
            Op::CrossEntropy {
                logits: logits.0,
                probs,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                count,
            },
            rg,
        ))
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let seed = &self.nodes[loss.0].value;
        if seed.numel() != 1 {
            return Err(GmemError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                seed.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(seed.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], target: usize, delta: Tensor) -> Result<()> {
        if !self.nodes[target].requires_grad {
            return Ok(());
        }
        match &mut grads[target] {
            Some(existing) => existing.add_assign(&delta)?,
            slot @ None => *slot = Some(delta),
        }
        Ok(())
    }

    fn wants(&self, v: usize) -> bool {
        self.nodes[v].requires_grad
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let val = |i: usize| &self.nodes[i].value;
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                if self.wants(a) {
                    self.accumulate(grads, a, g.matmul_t(val(b))?)?;
                }
                if self.wants(b) {
                    self.accumulate(grads, b, val(a).t_matmul(g)?)?;
                }
            }
            &Op::MatMulT(a, b) => {
                if self.wants(a) {
                    self.accumulate(grads, a, g.matmul(val(b))?)?;
                }
                if self.wants(b) {
                    self.accumulate(grads, b, g.t_matmul(val(a))?)?;
                }
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone())?;
                self.accumulate(grads, b, g.clone())?;
            }
            &Op::Sub(a, b) => {
                self.accumulate(grads, a, g.clone())?;
                self.accumulate(grads, b, g.scale(-1.0))?;
            }
            &Op::Mul(a, b) => {
                if self.wants(a) {
                    self.accumulate(grads, a, g.mul(val(b))?)?;
                }
                if self.wants(b) {
                    self.accumulate(grads, b, g.mul(val(a))?)?;
                }
            }
            &Op::AddRow(a, row) => {
                self.accumulate(grads, a, g.clone())?;
                if self.wants(row) {
                    let summed = g.mean_rows()?.scale(g.rows() as f64);
                    self.accumulate(grads, row, summed.reshape(val(row).shape())?)?;
                }
            }
            &Op::MulRow(a, row) => {
                if self.wants(a) {
                    self.accumulate(grads, a, g.mul_row(val(row))?)?;
                }
                if self.wants(row) {
                    let n = g.cols();
                    let mut acc = vec![0.0; n];
                    for (gr, xr) in g.data().chunks(n).zip(val(a).data().chunks(n)) {
                        for ((o, gv), xv) in acc.iter_mut().zip(gr).zip(xr) {
                            *o += gv * xv;
                        }
                    }
                    self.accumulate(grads, row, Tensor::new(val(row).shape().to_vec(), acc)?)?;
                }
            }
            &Op::Scale(a, factor) => self.accumulate(grads, a, g.scale(factor))?,
            &Op::OneMinus(a) => self.accumulate(grads, a, g.scale(-1.0))?,
            &Op::Sigmoid(a) => {
                let d = g.zip_map(&node.value, "sigmoid'", |gv, y| gv * y * (1.0 - y))?;
                self.accumulate(grads, a, d)?;
            }
            &Op::Tanh(a) => {
                let d = g.zip_map(&node.value, "tanh'", |gv, y| gv * (1.0 - y * y))?;
                self.accumulate(grads, a, d)?;
            }
            &Op::Relu(a) => {
                let d = g.zip_map(val(a), "relu'", |gv, x| if x > 0.0 { gv } else { 0.0 })?;
                self.accumulate(grads, a, d)?;
            }
            &Op::Abs(a) => {
                let d = g.zip_map(val(a), "abs'", |gv, x| gv * sign(x))?;
                self.accumulate(grads, a, d)?;
            }
            &Op::Softmax(a) | &Op::CausalSoftmax(a) => {
                let y = &node.value;
                let n = y.cols();
                let mut d = vec![0.0; y.numel()];
                for ((dr, gr), yr) in d.chunks_mut(n).zip(g.data().chunks(n)).zip(y.data().chunks(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((o, gv), yv) in dr.iter_mut().zip(gr).zip(yr) {
                        *o = yv * (gv - dot);
                    }
                }
                self.accumulate(grads, a, Tensor::new(y.shape().to_vec(), d)?)?;
            }
            &Op::LogSoftmax(a) => {
                let y = &node.value;
                let n = y.cols();
                let mut d = vec![0.0; y.numel()];
                for ((dr, gr), yr) in d.chunks_mut(n).zip(g.data().chunks(n)).zip(y.data().chunks(n)) {
                    let total: f64 = gr.iter().sum();
                    for ((o, gv), yv) in dr.iter_mut().zip(gr).zip(yr) {
                        *o = gv - yv.exp() * total;
                    }
                }
                self.accumulate(grads, a, Tensor::new(y.shape().to_vec(), d)?)?;
            }
            Op::LayerNorm { x, inv_std } => {
                let y = &node.value;
                let n = y.cols();
                let nf = n as f64;
                let mut d = vec![0.0; y.numel()];
                for (((dr, gr), yr), r) in d
                    .chunks_mut(n)
                    .zip(g.data().chunks(n))
                    .zip(y.data().chunks(n))
                    .zip(inv_std)
                {
                    let g_mean = gr.iter().sum::<f64>() / nf;
                    let gy_mean = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / nf;
                    for ((o, gv), yv) in dr.iter_mut().zip(gr).zip(yr) {
                        *o = r * (gv - g_mean - yv * gy_mean);
                    }
                }
                self.accumulate(grads, *x, Tensor::new(y.shape().to_vec(), d)?)?;
            }
            &Op::Concat(a, b) => {
                let wa = val(a).cols();
                let wb = val(b).cols();
                if self.wants(a) {
                    self.accumulate(grads, a, g.slice_cols(0, wa)?)?;
                }
                if self.wants(b) {
                    self.accumulate(grads, b, g.slice_cols(wa, wb)?)?;
                }
            }
            &Op::SliceCols { x, start } => {
                let src = val(x);
                let (m, n) = (src.rows(), src.cols());
                let len = g.cols();
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    d[i * n + start..i * n + start + len].copy_from_slice(g.row(i));
                }
                self.accumulate(grads, x, Tensor::new(src.shape().to_vec(), d)?)?;
            }
            Op::GatherRows { table, ids } => {
                let src = val(*table);
                let n = src.cols();
                let mut d = Tensor::zeros(src.shape());
                for (i, &id) in ids.iter().enumerate() {
                    let dst = &mut d.data_mut()[id * n..(id + 1) * n];
                    for (o, gv) in dst.iter_mut().zip(g.row(i)) {
                        *o += gv;
                    }
                }
                self.accumulate(grads, *table, d)?;
            }
            &Op::Transpose(a) => self.accumulate(grads, a, g.transpose()?)?,
            &Op::Sum(a) => {
                let gs = g.item();
                self.accumulate(grads, a, Tensor::full(val(a).shape(), gs))?;
            }
            &Op::Mean(a) => {
                let x = val(a);
                let gs = g.item() / x.numel() as f64;
                self.accumulate(grads, a, Tensor::full(x.shape(), gs))?;
            }
            &Op::MeanRows(a) => {
                let x = val(a);
                let (m, n) = (x.rows(), x.cols());
                let row: Vec<f64> = g.data().iter().map(|v| v / m as f64).collect();
                let mut d = Vec::with_capacity(m * n);
                for _ in 0..m {
                    d.extend_from_slice(&row);
                }
                self.accumulate(grads, a, Tensor::new(x.shape().to_vec(), d)?)?;
            }
            Op::CrossEntropy {
                logits,
                probs,
                targets,
                mask,
                count,
            } => {
                let scale = g.item() / *count as f64;
                let n = probs.cols();
                let mut d = vec![0.0; probs.numel()];
                for (t, (&target, &m)) in targets.iter().zip(mask).enumerate() {
                    if !m {
                        continue;
                    }
                    let dr = &mut d[t * n..(t + 1) * n];
                    for (o, p) in dr.iter_mut().zip(probs.row(t)) {
                        *o = p * scale;
                    }
                    dr[target] -= scale;
                }
                self.accumulate(grads, *logits, Tensor::new(probs.shape().to_vec(), d)?)?;
            }
        }
        Ok(())
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0).reshape(&[1, 1]).unwrap());
        let y = tape.mul(x, x).unwrap();
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[1, 1]));
        let y = tape.sigmoid(x);
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 0.25);
    }

    #[test]
    fn non_scalar_loss_is_a_contract_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2, 2]));
        let y = tape.tanh(x);
        assert!(matches!(tape.backward(y), Err(GmemError::Contract(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let w = tape.constant(Tensor::eye(2));
        let x = tape.leaf(Tensor::full(&[1, 2], 1.0));
        let y = tape.matmul(x, w).unwrap();
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(w).is_none());
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn cross_entropy_rejects_empty_mask() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::zeros(&[2, 3]));
        assert!(tape.cross_entropy(logits, &[0, 1], &[false, false]).is_err());
    }

    #[test]
    fn first_non_finite_reports_label() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[1, 1], f64::INFINITY));
        tape.label(x, "memory.m0");
        let y = tape.scale(x, 2.0);
        let _ = y;
        let report = tape.first_non_finite().unwrap();
        assert!(report.contains("memory.m0"), "{report}");
    }
}
