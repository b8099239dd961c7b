//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s. Calling
//! [`Graph::backward`] on a scalar walks the tape in reverse and returns the
//! gradient of every tracked node. A graph is single-threaded; independent
//! graphs may be built on different threads against shared [`Parameters`].

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;

use crate::crf;
use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::tensor::{layer_norm_rows, Activation, Tensor};

/// Deliberately wrong backward rules, used to prove the gradient checker
/// catches broken derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Sigmoid backward drops its `(1 - y)` factor.
    SigmoidDerivative,
}

enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddColBias(usize, usize),
    Act(usize, Activation),
    SoftmaxRows(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceRows(usize, usize),
    SliceCols(usize, usize),
    ReverseCols(usize),
    Sum(usize),
    MeanCols(usize),
    RepeatCols(usize),
    GatherRows(usize, Vec<usize>),
    MulConst(usize, Tensor),
    CrfNll {
        emissions: usize,
        transitions: usize,
        grad_e: Tensor,
        grad_t: Tensor,
    },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    tracked: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<HashMap<String, usize>>,
    fault: Cell<Option<Fault>>,
}

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// A graph whose backward pass applies `fault`. Only useful for
    /// negative-control tests of the gradient checker.
    pub fn with_fault(fault: Option<Fault>) -> Self {
        let g = Self::default();
        g.fault.set(fault);
        g
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Tensor, op: Op, tracked: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            tracked,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn tracked(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].tracked)
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// An untracked input; no gradient is ever allocated for it.
    /// Smallest `|x|` over every input fed to a ReLU so far, or `None`
    /// without ReLUs. Finite differences are unreliable when this is below
    /// the step size.
    pub fn relu_margin(&self) -> Option<f64> {
        let nodes = self.nodes.borrow();
        nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Act(x, Activation::Relu) => Some(nodes[x].value.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))),
                _ => None,
            })
            .reduce(f64::min)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    /// A tracked leaf that is not a named parameter.
    pub fn variable(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Bind the named parameter as a tracked leaf. Repeated calls with the
    /// same name return the same node.
    pub fn param<'g>(&'g self, params: &Parameters, name: &str) -> Result<Var<'g>> {
        if let Some(&id) = self.params.borrow().get(name) {
            return Ok(Var { graph: self, id });
        }
        let value = params.require(name)?.clone();
        let var = self.push(value, Op::Leaf, true);
        self.params.borrow_mut().insert(name.to_string(), var.id);
        Ok(var)
    }

    fn unary(&self, a: Var<'_>, value: Tensor, op: Op) -> Var<'_> {
        let tracked = self.tracked(&[a.id]);
        self.push(value, op, tracked)
    }

    fn binary(&self, a: Var<'_>, b: Var<'_>, value: Tensor, op: Op) -> Var<'_> {
        let tracked = self.tracked(&[a.id, b.id]);
        self.push(value, op, tracked)
    }

    /// Fused linear-chain CRF negative log-likelihood over emissions
    /// `L×n` and transitions `(L+2)×(L+2)`.
    pub fn crf_nll<'g>(
        &'g self,
        emissions: Var<'g>,
        transitions: Var<'g>,
        labels: &[usize],
        mask: Option<&Tensor>,
    ) -> Result<Var<'g>> {
        let e = self.value(emissions.id);
        let t = self.value(transitions.id);
        let t_eff = match mask {
            Some(m) => t.add(m)?,
            None => (*t).clone(),
        };
        let out = crf::nll_with_gradients(&e, &t_eff, labels)?;
        let tracked = self.tracked(&[emissions.id, transitions.id]);
        Ok(self.push(
            Tensor::scalar(out.loss),
            Op::CrfNll {
                emissions: emissions.id,
                transitions: transitions.id,
                grad_e: out.grad_emissions,
                grad_t: out.grad_transitions,
            },
            tracked,
        ))
    }

    /// Run reverse-mode differentiation from a scalar.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if !root.value.is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let fault = self.fault.get();
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.id + 1];
        if root.tracked {
            grads[loss.id] = Some(Tensor::full(root.value.shape(), 1.0));
        }

        for id in (0..=loss.id).rev() {
            let Some(dy) = grads[id].take() else { continue };
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(dy);
                continue;
            }
            let mut acc = |target: usize, g: Tensor| {
                if !nodes[target].tracked {
                    return;
                }
                match &mut grads[target] {
                    Some(existing) => {
                        for (e, v) in existing.data_mut().iter_mut().zip(g.data()) {
                            *e += v;
                        }
                    }
                    slot @ None => *slot = Some(g),
                }
            };
            let val = |i: usize| &*nodes[i].value;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    acc(*a, dy.matmul(&val(*b).transpose()?)?);
                    acc(*b, val(*a).transpose()?.matmul(&dy)?);
                }
                Op::Transpose(a) => acc(*a, dy.transpose()?),
                Op::Add(a, b) => {
                    acc(*a, dy.clone());
                    acc(*b, dy);
                }
                Op::Sub(a, b) => {
                    acc(*a, dy.clone());
                    acc(*b, dy.scale(-1.0));
                }
                Op::Mul(a, b) => {
                    acc(*a, dy.mul(val(*b))?);
                    acc(*b, dy.mul(val(*a))?);
                }
                Op::Scale(a, f) => acc(*a, dy.scale(*f)),
                Op::AddColBias(x, b) => {
                    let (m, n) = (dy.rows(), dy.cols());
                    let db: Vec<f64> = (0..m).map(|i| dy.data()[i * n..(i + 1) * n].iter().sum()).collect();
                    acc(*b, Tensor::new(val(*b).shape().to_vec(), db)?);
                    acc(*x, dy);
                }
                Op::Act(a, act) => {
                    let y = &*node.value;
                    let dx = match act {
                        Activation::Sigmoid => match fault {
                            Some(Fault::SigmoidDerivative) => dy.zip_map(y, "sigmoid", |g, y| g * y)?,
                            None => dy.zip_map(y, "sigmoid", |g, y| g * y * (1.0 - y))?,
                        },
                        Activation::Tanh => dy.zip_map(y, "tanh", |g, y| g * (1.0 - y * y))?,
                        Activation::Relu => dy.zip_map(y, "relu", |g, y| if y > 0.0 { g } else { 0.0 })?,
                    };
                    acc(*a, dx);
                }
                Op::SoftmaxRows(a) => {
                    let y = &*node.value;
                    let (m, n) = (y.rows(), y.cols());
                    let mut dx = vec![0.0; m * n];
                    for i in 0..m {
                        let yr = &y.data()[i * n..(i + 1) * n];
                        let gr = &dy.data()[i * n..(i + 1) * n];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            dx[i * n + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    acc(*a, Tensor::new(y.shape().to_vec(), dx)?);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let (m, n) = (dy.rows(), dy.cols());
                    let g = val(*gain).data();
                    let mut dg = vec![0.0; n];
                    let mut db = vec![0.0; n];
                    let mut dx = vec![0.0; m * n];
                    for i in 0..m {
                        let gr = &dy.data()[i * n..(i + 1) * n];
                        let hr = &xhat.data()[i * n..(i + 1) * n];
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for j in 0..n {
                            dg[j] += gr[j] * hr[j];
                            db[j] += gr[j];
                            let dh = gr[j] * g[j];
                            sum_dh += dh;
                            sum_dh_h += dh * hr[j];
                        }
                        let k = inv_std[i] / n as f64;
                        for j in 0..n {
                            let dh = gr[j] * g[j];
                            dx[i * n + j] = k * (n as f64 * dh - sum_dh - hr[j] * sum_dh_h);
                        }
                    }
                    acc(*x, Tensor::new(dy.shape().to_vec(), dx)?);
                    acc(*gain, Tensor::vector(dg));
                    acc(*bias, Tensor::vector(db));
                }
                Op::ConcatRows(parts) => {
                    let n = dy.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let rows = val(p).rows();
                        let slice = dy.data()[offset * n..(offset + rows) * n].to_vec();
                        acc(p, Tensor::matrix(rows, n, slice)?);
                        offset += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let (m, n) = (dy.rows(), dy.cols());
                    let mut offset = 0;
                    for &p in parts {
                        let cols = val(p).cols();
                        let mut part = Vec::with_capacity(m * cols);
                        for i in 0..m {
                            part.extend_from_slice(&dy.data()[i * n + offset..i * n + offset + cols]);
                        }
                        acc(p, Tensor::matrix(m, cols, part)?);
                        offset += cols;
                    }
                }
                Op::SliceRows(a, start) => {
                    let src = val(*a);
                    let n = src.cols();
                    let mut dx = Tensor::zeros(src.shape());
                    dx.data_mut()[start * n..start * n + dy.len()].copy_from_slice(dy.data());
                    acc(*a, dx);
                }
                Op::SliceCols(a, start) => {
                    let src = val(*a);
                    let mut dx = Tensor::zeros(src.shape());
                    for i in 0..dy.rows() {
                        for j in 0..dy.cols() {
                            dx.set(i, start + j, dy.get(i, j));
                        }
                    }
                    acc(*a, dx);
                }
                Op::ReverseCols(a) => acc(*a, reverse_cols(&dy)),
                Op::Sum(a) => acc(*a, Tensor::full(val(*a).shape(), dy.item())),
                Op::MeanCols(a) => {
                    let src = val(*a);
                    let n = src.cols() as f64;
                    let mut dx = Tensor::zeros(src.shape());
                    for i in 0..src.rows() {
                        for j in 0..src.cols() {
                            dx.set(i, j, dy.get(i, 0) / n);
                        }
                    }
                    acc(*a, dx);
                }
                Op::RepeatCols(a) => {
                    let sums: Vec<f64> = (0..dy.rows()).map(|i| dy.row(i).iter().sum()).collect();
                    acc(*a, Tensor::matrix(dy.rows(), 1, sums)?);
                }
                Op::GatherRows(table, indices) => {
                    let src = val(*table);
                    let d = src.cols();
                    let mut dt = Tensor::zeros(src.shape());
                    for (k, &row) in indices.iter().enumerate() {
                        for j in 0..d {
                            dt.data_mut()[row * d + j] += dy.data()[k * d + j];
                        }
                    }
                    acc(*table, dt);
                }
                Op::MulConst(a, factor) => acc(*a, dy.mul(factor)?),
                Op::CrfNll {
                    emissions,
                    transitions,
                    grad_e,
                    grad_t,
                } => {
                    let s = dy.item();
                    acc(*emissions, grad_e.scale(s));
                    acc(*transitions, grad_t.scale(s));
                }
            }
        }

        let param_ids = self.params.borrow().clone();
        Ok(Gradients { grads, param_ids })
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    param_ids: HashMap<String, usize>,
}

impl Gradients {
    /// Gradient of a tracked node; `None` for untracked inputs or nodes the
    /// loss does not depend on.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.param_ids
            .get(name)
            .and_then(|&id| self.grads.get(id))
            .and_then(Option::as_ref)
    }

    /// Gradients keyed by parameter name, for every parameter bound on the graph.
    pub fn into_params(mut self) -> HashMap<String, Tensor> {
        let mut out = HashMap::new();
        for (name, id) in self.param_ids {
            if let Some(g) = self.grads.get_mut(id).and_then(Option::take) {
                out.insert(name, g);
            }
        }
        out
    }
}

pub(crate) fn reverse_cols(t: &Tensor) -> Tensor {
    let (m, n) = (t.rows(), t.cols());
    let mut out = Tensor::zeros(t.shape());
    for i in 0..m {
        for j in 0..n {
            out.set(i, n - 1 - j, t.get(i, j));
        }
    }
    out
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.graph.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn rows(&self) -> usize {
        self.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.shape()[1]
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn is_tracked(&self) -> bool {
        self.graph.nodes.borrow()[self.id].tracked
    }

    fn same_graph(&self, other: Var<'g>) {
        assert!(std::ptr::eq(self.graph, other.graph), "vars from different graphs");
    }

    pub fn matmul(self, other: Var<'g>) -> Result<Var<'g>> {
        self.same_graph(other);
        let v = self.value().matmul(&other.value())?;
        Ok(self.graph.binary(self, other, v, Op::MatMul(self.id, other.id)))
    }

    pub fn t(self) -> Result<Var<'g>> {
        let v = self.value().transpose()?;
        Ok(self.graph.unary(self, v, Op::Transpose(self.id)))
    }

    pub fn add(self, other: Var<'g>) -> Result<Var<'g>> {
        self.same_graph(other);
        let v = self.value().add(&other.value())?;
        Ok(self.graph.binary(self, other, v, Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'g>) -> Result<Var<'g>> {
        self.same_graph(other);
        let v = self.value().sub(&other.value())?;
        Ok(self.graph.binary(self, other, v, Op::Sub(self.id, other.id)))
    }

    pub fn mul(self, other: Var<'g>) -> Result<Var<'g>> {
        self.same_graph(other);
        let v = self.value().mul(&other.value())?;
        Ok(self.graph.binary(self, other, v, Op::Mul(self.id, other.id)))
    }

    pub fn scale(self, factor: f64) -> Var<'g> {
        let v = self.value().scale(factor);
        self.graph.unary(self, v, Op::Scale(self.id, factor))
    }

    /// Add a length-`m` vector to every column of an `m×n` matrix.
    pub fn add_col_bias(self, bias: Var<'g>) -> Result<Var<'g>> {
        self.same_graph(bias);
        let x = self.value();
        let b = bias.value();
        if x.shape().len() != 2 || b.shape().len() != 1 || b.len() != x.rows() {
            return Err(Error::shape("add_col_bias", x.shape(), b.shape()));
        }
        let n = x.cols();
        let mut out = (*x).clone();
        for (i, chunk) in out.data_mut().chunks_mut(n).enumerate() {
            for v in chunk {
                *v += b.data()[i];
            }
        }
        Ok(self.graph.binary(self, bias, out, Op::AddColBias(self.id, bias.id)))
    }

    pub fn activate(self, act: Activation) -> Var<'g> {
        let v = self.value().activate(act);
        self.graph.unary(self, v, Op::Act(self.id, act))
    }

    pub fn sigmoid(self) -> Var<'g> {
        self.activate(Activation::Sigmoid)
    }

    pub fn tanh(self) -> Var<'g> {
        self.activate(Activation::Tanh)
    }

    pub fn relu(self) -> Var<'g> {
        self.activate(Activation::Relu)
    }

    pub fn softmax_rows(self) -> Result<Var<'g>> {
        let v = self.value().softmax_rows()?;
        Ok(self.graph.unary(self, v, Op::SoftmaxRows(self.id)))
    }

    /// Layer norm over each row.
    pub fn layer_norm(self, gain: Var<'g>, bias: Var<'g>, eps: f64) -> Result<Var<'g>> {
        let (out, xhat, inv_std) = layer_norm_rows(&self.value(), &gain.value(), &bias.value(), eps)?;
        let tracked = self.graph.tracked(&[self.id, gain.id, bias.id]);
        Ok(self.graph.push(
            out,
            Op::LayerNorm {
                x: self.id,
                gain: gain.id,
                bias: bias.id,
                xhat,
                inv_std,
            },
            tracked,
        ))
    }

    /// Layer norm over each column (the feature axis of a `d×positions` matrix).
    pub fn layer_norm_cols(self, gain: Var<'g>, bias: Var<'g>, eps: f64) -> Result<Var<'g>> {
        self.t()?.layer_norm(gain, bias, eps)?.t()
    }

    pub fn sum(self) -> Var<'g> {
        let v = Tensor::scalar(self.value().sum());
        self.graph.unary(self, v, Op::Sum(self.id))
    }

    /// Mean over columns: `m×n -> m×1`.
    pub fn mean_cols(self) -> Result<Var<'g>> {
        let x = self.value();
        if x.shape().len() != 2 {
            return Err(Error::contract("mean_cols expects a matrix"));
        }
        let n = x.cols() as f64;
        let means: Vec<f64> = (0..x.rows()).map(|i| x.row(i).iter().sum::<f64>() / n).collect();
        let v = Tensor::matrix(x.rows(), 1, means)?;
        Ok(self.graph.unary(self, v, Op::MeanCols(self.id)))
    }

    /// Broadcast an `m×1` column to `m×n`.
    pub fn repeat_cols(self, n: usize) -> Result<Var<'g>> {
        let x = self.value();
        if x.shape().len() != 2 || x.cols() != 1 || n == 0 {
            return Err(Error::shape("repeat_cols", x.shape(), &[x.rows(), n]));
        }
        let mut data = Vec::with_capacity(x.rows() * n);
        for &v in x.data() {
            data.extend(std::iter::repeat_n(v, n));
        }
        let v = Tensor::matrix(x.rows(), n, data)?;
        Ok(self.graph.unary(self, v, Op::RepeatCols(self.id)))
    }

    pub fn slice_rows(self, start: usize, len: usize) -> Result<Var<'g>> {
        let x = self.value();
        if x.shape().len() != 2 || len == 0 || start + len > x.rows() {
            return Err(Error::shape("slice_rows", x.shape(), &[start, len]));
        }
        let n = x.cols();
        let v = Tensor::matrix(len, n, x.data()[start * n..(start + len) * n].to_vec())?;
        Ok(self.graph.unary(self, v, Op::SliceRows(self.id, start)))
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Result<Var<'g>> {
        let x = self.value();
        if x.shape().len() != 2 || len == 0 || start + len > x.cols() {
            return Err(Error::shape("slice_cols", x.shape(), &[start, len]));
        }
        let mut data = Vec::with_capacity(x.rows() * len);
        for i in 0..x.rows() {
            data.extend_from_slice(&x.row(i)[start..start + len]);
        }
        let v = Tensor::matrix(x.rows(), len, data)?;
        Ok(self.graph.unary(self, v, Op::SliceCols(self.id, start)))
    }

    pub fn reverse_cols(self) -> Result<Var<'g>> {
        let x = self.value();
        if x.shape().len() != 2 {
            return Err(Error::contract("reverse_cols expects a matrix"));
        }
        let v = reverse_cols(&x);
        Ok(self.graph.unary(self, v, Op::ReverseCols(self.id)))
    }

    /// Pick rows of a `|V|×d` table: result is `indices.len()×d`.
    pub fn gather_rows(self, indices: &[usize]) -> Result<Var<'g>> {
        let table = self.value();
        if table.shape().len() != 2 || indices.is_empty() {
            return Err(Error::contract("gather_rows needs a matrix and at least one index"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= table.rows()) {
            return Err(Error::contract(format!(
                "row index {bad} out of range for table with {} rows",
                table.rows()
            )));
        }
        let d = table.cols();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(table.row(i));
        }
        let v = Tensor::matrix(indices.len(), d, data)?;
        Ok(self.graph.unary(self, v, Op::GatherRows(self.id, indices.to_vec())))
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(self, factor: Tensor) -> Result<Var<'g>> {
        let v = self.value().mul(&factor)?;
        Ok(self.graph.unary(self, v, Op::MulConst(self.id, factor)))
    }
}

/// Stack matrices vertically (same column count).
pub fn concat_rows<'g>(parts: &[Var<'g>]) -> Result<Var<'g>> {
    let first = parts.first().ok_or_else(|| Error::contract("concat_rows of nothing"))?;
    let g = first.graph;
    let cols = first.cols();
    let mut data = Vec::new();
    let mut rows = 0;
    for p in parts {
        let v = p.value();
        if v.shape().len() != 2 || v.cols() != cols {
            return Err(Error::shape("concat_rows", &first.shape(), v.shape()));
        }
        rows += v.rows();
        data.extend_from_slice(v.data());
    }
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let tracked = g.tracked(&ids);
    Ok(g.push(Tensor::matrix(rows, cols, data)?, Op::ConcatRows(ids), tracked))
}

/// Join matrices side by side (same row count).
pub fn concat_cols<'g>(parts: &[Var<'g>]) -> Result<Var<'g>> {
    let first = parts.first().ok_or_else(|| Error::contract("concat_cols of nothing"))?;
    let g = first.graph;
    let rows = first.rows();
    let values: Vec<Rc<Tensor>> = parts.iter().map(|p| p.value()).collect();
    for v in &values {
        if v.shape().len() != 2 || v.rows() != rows {
            return Err(Error::shape("concat_cols", &first.shape(), v.shape()));
        }
    }
    let cols: usize = values.iter().map(|v| v.cols()).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for v in &values {
            data.extend_from_slice(v.row(i));
        }
    }
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let tracked = g.tracked(&ids);
    Ok(g.push(Tensor::matrix(rows, cols, data)?, Op::ConcatCols(ids), tracked))
}

/// Inverted dropout. A disabled instance (evaluation mode) is the identity.
#[derive(Debug)]
pub struct Dropout<R> {
    rate: f64,
    rng: Option<R>,
}

impl<R: Rng> Dropout<R> {
    pub fn train(rate: f64, rng: R) -> Self {
        Dropout { rate, rng: Some(rng) }
    }

    pub fn is_active(&self) -> bool {
        self.rng.is_some() && self.rate > 0.0
    }

    pub fn apply<'g>(&mut self, x: Var<'g>) -> Result<Var<'g>> {
        let rate = self.rate;
        let Some(rng) = self.rng.as_mut().filter(|_| rate > 0.0) else {
            return Ok(x);
        };
        let keep = 1.0 - rate;
        let mut mask = Tensor::zeros(&x.shape());
        for m in mask.data_mut() {
            *m = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
        }
        x.mul_const(mask)
    }
}

impl Dropout<rand_chacha::ChaCha8Rng> {
    pub fn disabled() -> Self {
        Dropout { rate: 0.0, rng: None }
    }
}
