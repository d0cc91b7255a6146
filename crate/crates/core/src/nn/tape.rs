//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation applied to it; [`Tape::backward`]
//! walks the record in reverse and returns the gradient of a scalar node
//! with respect to every node that requires one. Learned parameters enter
//! the tape through [`Tape::param`] and their gradients are collected by
//! [`Gradients::param_grads`].

use std::collections::HashMap;

use super::params::{ParamGroup, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddCol(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    LeakyRelu(Var, f64),
    Relu(Var),
    Softplus(Var),
    LogSigmoid(Var),
    Square(Var),
    MatMul(Var, Var),
    Conv1d {
        x: Var,
        w: Var,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    InstanceNorm {
        x: Var,
        inv_std: Vec<f64>,
    },
    MeanCols(Var),
    Upsample {
        x: Var,
        taps: Vec<(usize, usize, f64)>,
    },
    SliceRows(Var, usize),
    MeanAll(Var),
    SumScalars(Vec<Var>),
    MeanAbsDiff(Var, Var),
    L2Dist(Var, Var),
    BatchAllTriplet {
        inputs: Vec<Var>,
        scale: f64,
        coeff: Vec<f64>,
    },
    SoftmaxXent {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    frozen: Vec<ParamGroup>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parameters of `group` enter this tape as constants from now on.
    pub fn freeze(&mut self, group: ParamGroup) {
        if !self.frozen.contains(&group) {
            self.frozen.push(group);
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is reported by [`Tape::backward`].
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let trainable = !self.frozen.contains(&store.group(id));
        let v = self.push(store.value(id).clone(), Op::Param, trainable);
        self.params.insert(id, v);
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    /// `x + col` with the `C × 1` column broadcast over every time step.
    pub fn add_col(&mut self, x: Var, col: Var) -> Var {
        let (xv, cv) = (self.value(x), self.value(col));
        assert_eq!(cv.shape(), (xv.rows(), 1), "add_col expects a matching column");
        let mut value = xv.clone();
        for r in 0..value.rows() {
            let c = cv[(r, 0)];
            value.row_mut(r).iter_mut().for_each(|v| *v += c);
        }
        let rg = self.rg(x) || self.rg(col);
        self.push(value, Op::AddCol(x, col), rg)
    }

    /// `x * col` with the `C × 1` column broadcast over every time step.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Var {
        let (xv, cv) = (self.value(x), self.value(col));
        assert_eq!(cv.shape(), (xv.rows(), 1), "mul_col expects a matching column");
        let mut value = xv.clone();
        for r in 0..value.rows() {
            let c = cv[(r, 0)];
            value.row_mut(r).iter_mut().for_each(|v| *v *= c);
        }
        let rg = self.rg(x) || self.rg(col);
        self.push(value, Op::MulCol(x, col), rg)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let value = self.value(x).scaled(s);
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, s), rg)
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let value = self.value(x).map(|v| v + s);
        let rg = self.rg(x);
        self.push(value, Op::AddScalar(x), rg)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        let rg = self.rg(x);
        self.push(value, Op::LeakyRelu(x, slope), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(x);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let value = self.value(x).map(softplus);
        let rg = self.rg(x);
        self.push(value, Op::Softplus(x), rg)
    }

    /// `log(sigmoid(x))`, computed without overflow.
    pub fn log_sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| -softplus(-v));
        let rg = self.rg(x);
        self.push(value, Op::LogSigmoid(x), rg)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        let rg = self.rg(x);
        self.push(value, Op::Square(x), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    /// Temporal convolution. `w` is `C_out × (C_in · kernel)` with the
    /// kernel taps of each input channel stored contiguously.
    pub fn conv1d(&mut self, x: Var, w: Var, kernel: usize, stride: usize, pad: usize) -> Var {
        let value = conv1d_forward(self.value(x), self.value(w), kernel, stride, pad);
        let rg = self.rg(x) || self.rg(w);
        self.push(
            value,
            Op::Conv1d {
                x,
                w,
                kernel,
                stride,
                pad,
            },
            rg,
        )
    }

    /// Per-row standardization over time: `(x - mean) / sqrt(var + eps)`.
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Var {
        let (value, inv_std) = instance_norm_forward(self.value(x), eps);
        let rg = self.rg(x);
        self.push(value, Op::InstanceNorm { x, inv_std }, rg)
    }

    /// Temporal mean, `C × N -> C × 1`.
    pub fn mean_cols(&mut self, x: Var) -> Var {
        let value = self.value(x).row_means();
        let rg = self.rg(x);
        self.push(value, Op::MeanCols(x), rg)
    }

    /// Linear-interpolation upsampling along time (half-pixel centers,
    /// edge-clamped).
    pub fn upsample_linear(&mut self, x: Var, factor: usize) -> Var {
        let xv = self.value(x);
        let taps = upsample_taps(xv.cols(), factor);
        let mut value = Tensor::zeros(xv.rows(), taps.len());
        for r in 0..xv.rows() {
            let src = xv.row(r);
            for (dst, &(i0, i1, w)) in value.row_mut(r).iter_mut().zip(&taps) {
                *dst = (1.0 - w) * src[i0] + w * src[i1];
            }
        }
        let rg = self.rg(x);
        self.push(value, Op::Upsample { x, taps }, rg)
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.value(x).slice_rows(start, len);
        let rg = self.rg(x);
        self.push(value, Op::SliceRows(x, start), rg)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).mean());
        let rg = self.rg(x);
        self.push(value, Op::MeanAll(x), rg)
    }

    /// Sum of 1×1 nodes, accumulated left to right.
    pub fn sum_scalars(&mut self, xs: &[Var]) -> Var {
        let total = xs.iter().fold(0.0, |acc, &v| acc + self.scalar(v));
        let rg = xs.iter().any(|&v| self.rg(v));
        self.push(Tensor::scalar(total), Op::SumScalars(xs.to_vec()), rg)
    }

    pub fn mean_scalars(&mut self, xs: &[Var]) -> Var {
        let s = self.sum_scalars(xs);
        self.scale(s, 1.0 / xs.len() as f64)
    }

    /// Mean elementwise absolute difference.
    pub fn mean_abs_diff(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "mean_abs_diff shape mismatch");
        let total: f64 = av.data().iter().zip(bv.data()).map(|(x, y)| (x - y).abs()).sum();
        let value = Tensor::scalar(total / av.len() as f64);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MeanAbsDiff(a, b), rg)
    }

    /// Euclidean distance between two same-shape nodes.
    pub fn l2_dist(&mut self, a: Var, b: Var) -> Var {
        let d = euclidean(self.value(a).data(), self.value(b).data());
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::scalar(d), Op::L2Dist(a, b), rg)
    }

    /// Batch-all triplet hinge averaged over the triples with positive loss.
    ///
    /// Distances are `scale · ‖e_i − e_j‖`. Returns `None` when the labels
    /// admit no (anchor, positive, negative) triple.
    pub fn batch_all_triplet<L: PartialEq>(
        &mut self,
        inputs: &[Var],
        labels: &[L],
        delta: f64,
        scale: f64,
    ) -> Option<Var> {
        assert_eq!(inputs.len(), labels.len(), "one label per embedding");
        let n = inputs.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = scale * euclidean(self.value(inputs[i]).data(), self.value(inputs[j]).data());
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        let mut valid = 0usize;
        let mut positive = 0usize;
        let mut excess = 0.0;
        let mut coeff = vec![0.0; n * n];
        for a in 0..n {
            for p in 0..n {
                if p == a || labels[p] != labels[a] {
                    continue;
                }
                for neg in 0..n {
                    if labels[neg] == labels[a] {
                        continue;
                    }
                    valid += 1;
                    let gap = dist[a * n + p] - dist[a * n + neg];
                    if gap + delta > 0.0 {
                        positive += 1;
                        excess += gap;
                        coeff[a * n + p] += 1.0;
                        coeff[a * n + neg] -= 1.0;
                    }
                }
            }
        }
        if valid == 0 {
            return None;
        }
        let value = if positive > 0 { delta + excess / positive as f64 } else { 0.0 };
        if positive > 0 {
            let inv = 1.0 / positive as f64;
            coeff.iter_mut().for_each(|c| *c *= inv);
        }
        let rg = inputs.iter().any(|&v| self.rg(v));
        Some(self.push(
            Tensor::scalar(value),
            Op::BatchAllTriplet {
                inputs: inputs.to_vec(),
                scale,
                coeff,
            },
            rg,
        ))
    }

    /// Softmax cross-entropy of a `K × 1` logit column against class `target`.
    pub fn softmax_xent(&mut self, logits: Var, target: usize) -> Var {
        let z = self.value(logits).data();
        assert!(target < z.len(), "target class out of range");
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let norm: f64 = exps.iter().sum();
        let loss = norm.ln() + max - z[target];
        let probs = exps.iter().map(|e| e / norm).collect();
        let rg = self.rg(logits);
        self.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                logits,
                target,
                probs,
            },
            rg,
        )
    }

    /// Gradients of the 1×1 node `root` with respect to every node that
    /// requires one.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(
            self.value(root).shape(),
            (1, 1),
            "backward() needs a scalar root"
        );
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, delta: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scaled(-1.0));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(self.value(*b), |x, y| x * y));
                acc(*b, g.zip_map(self.value(*a), |x, y| x * y));
            }
            Op::AddCol(x, col) => {
                acc(*x, g.clone());
                acc(*col, g.row_means().scaled(g.cols() as f64));
            }
            Op::MulCol(x, col) => {
                let xv = self.value(*x);
                let cv = self.value(*col);
                let mut gx = g.clone();
                let mut gc = Tensor::zeros(cv.rows(), 1);
                for r in 0..g.rows() {
                    let c = cv[(r, 0)];
                    gx.row_mut(r).iter_mut().for_each(|v| *v *= c);
                    gc[(r, 0)] = g.row(r).iter().zip(xv.row(r)).map(|(a, b)| a * b).sum();
                }
                acc(*x, gx);
                acc(*col, gc);
            }
            Op::Scale(x, s) => acc(*x, g.scaled(*s)),
            Op::AddScalar(x) => acc(*x, g.clone()),
            Op::LeakyRelu(x, slope) => {
                let d = g.zip_map(self.value(*x), |gv, xv| if xv > 0.0 { gv } else { slope * gv });
                acc(*x, d);
            }
            Op::Relu(x) => {
                let d = g.zip_map(self.value(*x), |gv, xv| if xv > 0.0 { gv } else { 0.0 });
                acc(*x, d);
            }
            Op::Softplus(x) => {
                let d = g.zip_map(self.value(*x), |gv, xv| gv * sigmoid(xv));
                acc(*x, d);
            }
            Op::LogSigmoid(x) => {
                let d = g.zip_map(self.value(*x), |gv, xv| gv * sigmoid(-xv));
                acc(*x, d);
            }
            Op::Square(x) => {
                let d = g.zip_map(self.value(*x), |gv, xv| 2.0 * gv * xv);
                acc(*x, d);
            }
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                if self.nodes[a.0].requires_grad {
                    acc(*a, g.matmul(&bv.transpose()));
                }
                if self.nodes[b.0].requires_grad {
                    acc(*b, av.transpose().matmul(g));
                }
            }
            Op::Conv1d {
                x,
                w,
                kernel,
                stride,
                pad,
            } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                if self.nodes[x.0].requires_grad {
                    acc(*x, conv1d_grad_input(g, wv, xv.shape(), *kernel, *stride, *pad));
                }
                if self.nodes[w.0].requires_grad {
                    acc(*w, conv1d_grad_weight(g, xv, wv.shape(), *kernel, *stride, *pad));
                }
            }
            Op::InstanceNorm { x, inv_std } => {
                let y = &node.value;
                let n = y.cols() as f64;
                let mut dx = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let gr = g.row(r);
                    let yr = y.row(r);
                    let mean_g = gr.iter().sum::<f64>() / n;
                    let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
                    for ((d, &gv), &yv) in dx.row_mut(r).iter_mut().zip(gr).zip(yr) {
                        *d = inv_std[r] * (gv - mean_g - yv * mean_gy);
                    }
                }
                acc(*x, dx);
            }
            Op::MeanCols(x) => {
                let cols = self.value(*x).cols();
                let mut dx = Tensor::zeros(g.rows(), cols);
                for r in 0..g.rows() {
                    let v = g[(r, 0)] / cols as f64;
                    dx.row_mut(r).iter_mut().for_each(|d| *d = v);
                }
                acc(*x, dx);
            }
            Op::Upsample { x, taps } => {
                let xv = self.value(*x);
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..g.rows() {
                    let gr = g.row(r);
                    let dr = dx.row_mut(r);
                    for (&gv, &(i0, i1, w)) in gr.iter().zip(taps) {
                        dr[i0] += (1.0 - w) * gv;
                        dr[i1] += w * gv;
                    }
                }
                acc(*x, dx);
            }
            Op::SliceRows(x, start) => {
                let xv = self.value(*x);
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..g.rows() {
                    dx.row_mut(start + r).copy_from_slice(g.row(r));
                }
                acc(*x, dx);
            }
            Op::MeanAll(x) => {
                let xv = self.value(*x);
                acc(*x, Tensor::full(xv.rows(), xv.cols(), g.item() / xv.len() as f64));
            }
            Op::SumScalars(xs) => {
                for &v in xs {
                    acc(v, g.clone());
                }
            }
            Op::MeanAbsDiff(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let s = g.item() / av.len() as f64;
                let da = av.zip_map(bv, |x, y| s * sign(x - y));
                acc(*b, da.scaled(-1.0));
                acc(*a, da);
            }
            Op::L2Dist(a, b) => {
                let d = node.value.item();
                if d > 0.0 {
                    let s = g.item() / d;
                    let da = self.value(*a).zip_map(self.value(*b), |x, y| s * (x - y));
                    acc(*b, da.scaled(-1.0));
                    acc(*a, da);
                }
            }
            Op::BatchAllTriplet {
                inputs,
                scale,
                coeff,
            } => {
                let n = inputs.len();
                let gv = g.item();
                let mut deltas: Vec<Option<Tensor>> = vec![None; n];
                for i in 0..n {
                    for j in 0..n {
                        let c = coeff[i * n + j];
                        if c == 0.0 {
                            continue;
                        }
                        let ei = self.value(inputs[i]);
                        let ej = self.value(inputs[j]);
                        let d = euclidean(ei.data(), ej.data());
                        if d == 0.0 {
                            continue;
                        }
                        let s = gv * c * scale / d;
                        let dij = ei.zip_map(ej, |x, y| s * (x - y));
                        for (k, t) in [(i, dij.clone()), (j, dij.scaled(-1.0))] {
                            match &mut deltas[k] {
                                Some(e) => e.add_assign(&t),
                                slot @ None => *slot = Some(t),
                            }
                        }
                    }
                }
                for (v, d) in inputs.iter().zip(deltas) {
                    if let Some(d) = d {
                        acc(*v, d);
                    }
                }
            }
            Op::SoftmaxXent {
                logits,
                target,
                probs,
            } => {
                let gv = g.item();
                let mut d: Vec<f64> = probs.iter().map(|p| gv * p).collect();
                d[*target] -= gv;
                acc(*logits, Tensor::column(&d));
            }
        }
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of every trainable parameter reachable from the root.
    pub fn param_grads(&self, tape: &Tape) -> Vec<(ParamId, Tensor)> {
        let mut out: Vec<(ParamId, Tensor)> = tape
            .params
            .iter()
            .filter(|(_, v)| tape.nodes[v.0].requires_grad)
            .filter_map(|(&id, &v)| self.wrt(v).map(|g| (id, g.clone())))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
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

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn conv_out_len(len: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (len + 2 * pad - kernel) / stride + 1
}

/// Output range `[lo, hi)` of time steps whose input index `t*stride + k - pad`
/// falls inside `0..len`.
fn valid_range(out_len: usize, len: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    // t*stride + k - pad <= len - 1
    let hi = if len + pad < k + 1 {
        0
    } else {
        ((len + pad - k - 1) / stride + 1).min(out_len)
    };
    (lo.min(hi), hi)
}

fn conv1d_forward(x: &Tensor, w: &Tensor, kernel: usize, stride: usize, pad: usize) -> Tensor {
    let (c_in, len) = x.shape();
    let c_out = w.rows();
    assert_eq!(w.cols(), c_in * kernel, "conv1d weight does not match input channels");
    let out_len = conv_out_len(len, kernel, stride, pad);
    let mut out = Tensor::zeros(c_out, out_len);
    for o in 0..c_out {
        let wrow = w.row(o);
        let orow = out.row_mut(o);
        for i in 0..c_in {
            let xrow = x.row(i);
            for k in 0..kernel {
                let wv = wrow[i * kernel + k];
                let (lo, hi) = valid_range(out_len, len, k, stride, pad);
                if stride == 1 {
                    let src = &xrow[lo + k - pad..hi + k - pad];
                    for (o, &s) in orow[lo..hi].iter_mut().zip(src) {
                        *o += wv * s;
                    }
                } else {
                    for t in lo..hi {
                        orow[t] += wv * xrow[t * stride + k - pad];
                    }
                }
            }
        }
    }
    out
}

fn conv1d_grad_input(
    g: &Tensor,
    w: &Tensor,
    x_shape: (usize, usize),
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Tensor {
    let (c_in, len) = x_shape;
    let out_len = g.cols();
    let mut dx = Tensor::zeros(c_in, len);
    for o in 0..w.rows() {
        let grow = g.row(o);
        let wrow = w.row(o);
        for i in 0..c_in {
            let drow = dx.row_mut(i);
            for k in 0..kernel {
                let wv = wrow[i * kernel + k];
                let (lo, hi) = valid_range(out_len, len, k, stride, pad);
                if stride == 1 {
                    let dst = &mut drow[lo + k - pad..hi + k - pad];
                    for (d, &gv) in dst.iter_mut().zip(&grow[lo..hi]) {
                        *d += wv * gv;
                    }
                } else {
                    for t in lo..hi {
                        drow[t * stride + k - pad] += wv * grow[t];
                    }
                }
            }
        }
    }
    dx
}

fn conv1d_grad_weight(
    g: &Tensor,
    x: &Tensor,
    w_shape: (usize, usize),
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Tensor {
    let (c_in, len) = x.shape();
    let out_len = g.cols();
    let mut dw = Tensor::zeros(w_shape.0, w_shape.1);
    for o in 0..w_shape.0 {
        let grow = g.row(o);
        let dwrow = dw.row_mut(o);
        for i in 0..c_in {
            let xrow = x.row(i);
            for k in 0..kernel {
                let (lo, hi) = valid_range(out_len, len, k, stride, pad);
                let s: f64 = if stride == 1 {
                    grow[lo..hi]
                        .iter()
                        .zip(&xrow[lo + k - pad..hi + k - pad])
                        .map(|(a, b)| a * b)
                        .sum()
                } else {
                    (lo..hi).map(|t| grow[t] * xrow[t * stride + k - pad]).sum()
                };
                dwrow[i * kernel + k] = s;
            }
        }
    }
    dw
}

fn instance_norm_forward(x: &Tensor, eps: f64) -> (Tensor, Vec<f64>) {
    let n = x.cols() as f64;
    let mut out = Tensor::zeros(x.rows(), x.cols());
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + eps).sqrt();
        for (o, &v) in out.row_mut(r).iter_mut().zip(row) {
            *o = (v - mean) * inv;
        }
        inv_std.push(inv);
    }
    (out, inv_std)
}

fn upsample_taps(len: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    let out_len = len * factor;
    (0..out_len)
        .map(|t| {
            let src = ((t as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            let w = if i1 == i0 { 0.0 } else { src - i0 as f64 };
            (i0, i1, w)
        })
        .collect()
}
