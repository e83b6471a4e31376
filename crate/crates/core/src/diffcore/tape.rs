//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Every operation evaluates eagerly and appends a node to the tape. Nodes
//! only ever reference earlier nodes, so a single reverse sweep over the node
//! list visits each node after all of its consumers. Parameters enter the tape
//! through [`Tape::param`]; [`Tape::backward`] adds d(loss)/d(param) into each
//! registered [`Param`](super::Param)'s `grad` buffer.
//!
//! Most operations accept either a rank-1 operand (one sample) or a rank-2
//! operand whose rows are independent samples of a mini-batch.

use std::collections::HashMap;

use super::tensor::{axpy, dot};
use super::{ParamRef, Tensor};
use crate::error::{Error, Result};

/// Lower clamp applied to probabilities before taking the logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

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
    Param,
    MatVec { w: usize, x: usize },
    AddBias { a: usize, b: usize },
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Hadamard { a: usize, b: usize },
    Scale { a: usize, c: f64 },
    Tanh { a: usize },
    Sigmoid { a: usize },
    Concat { parts: Vec<usize> },
    Softmax { a: usize },
    CrossEntropy { p: usize, targets: Vec<usize> },
    Dot { a: usize, v: usize },
    WeightedSum { weights: usize, items: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(ParamRef, usize)>,
    param_nodes: HashMap<usize, usize>,
}

fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Tensor>], idx: usize) -> Option<&'a mut Tensor> {
    if !nodes[idx].needs_grad {
        return None;
    }
    let slot = &mut grads[idx];
    if slot.is_none() {
        *slot = Some(Tensor::zeros(nodes[idx].value.shape()));
    }
    slot.as_mut()
}

fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp_m1();
    (-e / (2.0 + e)).copysign(x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// First entry of a node's value; intended for scalar losses.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].needs_grad)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Records a constant input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Registers a parameter. Repeated calls with the same parameter return
    /// the same node, so gradients from every use accumulate in one place.
    pub fn param(&mut self, p: &ParamRef) -> Var {
        if let Some(&idx) = self.param_nodes.get(&p.addr()) {
            return Var(idx);
        }
        let v = self.push(p.value(), Op::Param, true);
        self.param_nodes.insert(p.addr(), v.0);
        self.params.push((p.clone(), v.0));
        v
    }

    /// `W x` for `x` of shape `[n]`, or row-wise `X Wᵀ` for `x` of shape `[B×n]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (ws, xs) = (self.shape(w), self.shape(x));
        if ws.len() != 2 || ws[1] != *xs.last().unwrap() {
            return Err(Error::dim("matvec", ws, xs));
        }
        let (m, n) = (ws[0], ws[1]);
        let wt = &self.nodes[w.0].value;
        let xt = &self.nodes[x.0].value;
        let rows = xt.rows();
        let mut out = Vec::with_capacity(rows * m);
        for r in 0..rows {
            let xr = &xt.data()[r * n..(r + 1) * n];
            for i in 0..m {
                out.push(dot(&wt.data()[i * n..(i + 1) * n], xr));
            }
        }
        let shape = if xt.rank() == 1 { vec![m] } else { vec![rows, m] };
        let needs = self.needs(&[w.0, x.0]);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::MatVec { w: w.0, x: x.0 },
            needs,
        ))
    }

    /// Adds a rank-1 bias to a vector, or to every row of a matrix.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let (as_, bs) = (self.shape(a), self.shape(b));
        if bs.len() != 1 || *as_.last().unwrap() != bs[0] {
            return Err(Error::dim("add_bias", as_, bs));
        }
        let bias = self.nodes[b.0].value.data();
        let mut out = self.nodes[a.0].value.clone();
        for row in out.data_mut().chunks_mut(bias.len().max(1)) {
            row.iter_mut().zip(bias).for_each(|(o, b)| *o += b);
        }
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(out, Op::AddBias { a: a.0, b: b.0 }, needs))
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(name, self.shape(a), self.shape(b)));
        }
        let at = &self.nodes[a.0].value;
        let bt = &self.nodes[b.0].value;
        let data = at.data().iter().zip(bt.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(at.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("add", a, b, |x, y| x + y)?;
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(out, Op::Add { a: a.0, b: b.0 }, needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("sub", a, b, |x, y| x - y)?;
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(out, Op::Sub { a: a.0, b: b.0 }, needs))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("hadamard", a, b, |x, y| x * y)?;
        let needs = self.needs(&[a.0, b.0]);
        Ok(self.push(out, Op::Hadamard { a: a.0, b: b.0 }, needs))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.nodes[a.0].value.map(|x| c * x);
        let needs = self.needs(&[a.0]);
        self.push(out, Op::Scale { a: a.0, c }, needs)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(tanh);
        let needs = self.needs(&[a.0]);
        self.push(out, Op::Tanh { a: a.0 }, needs)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.nodes[a.0].value.map(sigmoid);
        let needs = self.needs(&[a.0]);
        self.push(out, Op::Sigmoid { a: a.0 }, needs)
    }

    /// Concatenates along the last axis. Rank-1 parts may be empty; rank-2
    /// parts must share their row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::usage("concat needs at least one part"))?;
        let rank = self.nodes[first.0].value.rank();
        let rows = self.nodes[first.0].value.rows();
        for p in parts {
            let t = &self.nodes[p.0].value;
            if t.rank() != rank || t.rows() != rows {
                return Err(Error::dim("concat", self.shape(*first), t.shape()));
            }
        }
        let total: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.nodes[p.0].value.row(r));
            }
        }
        let shape = if rank == 1 { vec![total] } else { vec![rows, total] };
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let needs = self.needs(&ids);
        Ok(self.push(Tensor::new(shape, data)?, Op::Concat { parts: ids }, needs))
    }

    /// Softmax over a vector, or over each row of a matrix.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = &self.nodes[a.0].value;
        if t.cols() == 0 {
            return Err(Error::usage("softmax of an empty vector"));
        }
        let mut out = t.clone();
        let c = t.cols();
        for row in out.data_mut().chunks_mut(c) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            row.iter_mut().for_each(|x| *x /= sum);
        }
        let needs = self.needs(&[a.0]);
        Ok(self.push(out, Op::Softmax { a: a.0 }, needs))
    }

    /// Mean over rows of `-ln(max(p[target], 1e-12))`. Returns a `[1]` node.
    pub fn cross_entropy(&mut self, p: Var, targets: &[usize]) -> Result<Var> {
        let t = &self.nodes[p.0].value;
        if t.rows() != targets.len() {
            return Err(Error::usage(format!(
                "cross_entropy: {} rows of probabilities but {} targets",
                t.rows(),
                targets.len()
            )));
        }
        let n = t.cols();
        let mut loss = 0.0;
        for (r, &target) in targets.iter().enumerate() {
            if target >= n {
                return Err(Error::usage(format!(
                    "cross_entropy: target {target} out of range for {n} classes"
                )));
            }
            loss -= t.get(r, target).max(LOG_CLAMP).ln();
        }
        loss /= targets.len() as f64;
        let needs = self.needs(&[p.0]);
        Ok(self.push(
            Tensor::vector(vec![loss]),
            Op::CrossEntropy {
                p: p.0,
                targets: targets.to_vec(),
            },
            needs,
        ))
    }

    /// `a · v` for rank-1 `a` (shape `[1]`), or per row of rank-2 `a` (shape `[B×1]`).
    pub fn dot(&mut self, a: Var, v: Var) -> Result<Var> {
        let (as_, vs) = (self.shape(a), self.shape(v));
        if vs.len() != 1 || *as_.last().unwrap() != vs[0] {
            return Err(Error::dim("dot", as_, vs));
        }
        let at = &self.nodes[a.0].value;
        let vt = self.nodes[v.0].value.data();
        let data: Vec<f64> = (0..at.rows()).map(|r| dot(at.row(r), vt)).collect();
        let shape = if at.rank() == 1 { vec![1] } else { vec![at.rows(), 1] };
        let needs = self.needs(&[a.0, v.0]);
        Ok(self.push(Tensor::new(shape, data)?, Op::Dot { a: a.0, v: v.0 }, needs))
    }

    /// `Σ_t weights[t] · items[t]`, per row when the operands are rank-2
    /// (`weights: [B×T]`, `items[t]: [B×H]`).
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Result<Var> {
        let wt = &self.nodes[weights.0].value;
        if items.is_empty() || wt.cols() != items.len() {
            return Err(Error::dim("weighted_sum", wt.shape(), &[items.len()]));
        }
        let item_shape = self.nodes[items[0].0].value.shape().to_vec();
        let rows = wt.rows();
        for it in items {
            let s = self.nodes[it.0].value.shape();
            if s != item_shape.as_slice() || self.nodes[it.0].value.rows() != rows
                || s.len() != wt.rank()
            {
                return Err(Error::dim("weighted_sum", wt.shape(), s));
            }
        }
        let h = *item_shape.last().unwrap();
        let mut out = Tensor::zeros(&item_shape);
        for (t, it) in items.iter().enumerate() {
            let iv = &self.nodes[it.0].value;
            for r in 0..rows {
                let w = wt.get(r, t);
                axpy(w, iv.row(r), &mut out.data_mut()[r * h..(r + 1) * h]);
            }
        }
        let mut ids = vec![weights.0];
        ids.extend(items.iter().map(|v| v.0));
        let needs = self.needs(&ids);
        Ok(self.push(
            out,
            Op::WeightedSum {
                weights: weights.0,
                items: items.iter().map(|v| v.0).collect(),
            },
            needs,
        ))
    }

    /// Reverse sweep from a scalar `loss`, adding d(loss)/d(param) into the
    /// `grad` buffer of every parameter registered on this tape.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        for (p, idx) in &self.params {
            if let Some(g) = grads.get(*idx).and_then(Option::as_ref) {
                p.borrow_mut().grad.add_assign(g)?;
            }
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let nodes = &self.nodes;
        let out = &nodes[i].value;
        match &nodes[i].op {
            Op::Leaf | Op::Param => {}
            Op::MatVec { w, x } => {
                let wt = &nodes[*w].value;
                let xt = &nodes[*x].value;
                let (m, n) = (wt.shape()[0], wt.shape()[1]);
                let rows = xt.rows();
                if let Some(gx) = slot(nodes, grads, *x) {
                    for r in 0..rows {
                        let gr = &g.data()[r * m..(r + 1) * m];
                        let gxr = &mut gx.data_mut()[r * n..(r + 1) * n];
                        for (k, &gk) in gr.iter().enumerate() {
                            if gk != 0.0 {
                                axpy(gk, &wt.data()[k * n..(k + 1) * n], gxr);
                            }
                        }
                    }
                }
                if let Some(gw) = slot(nodes, grads, *w) {
                    for r in 0..rows {
                        let gr = &g.data()[r * m..(r + 1) * m];
                        let xr = &xt.data()[r * n..(r + 1) * n];
                        for (k, &gk) in gr.iter().enumerate() {
                            if gk != 0.0 {
                                axpy(gk, xr, &mut gw.data_mut()[k * n..(k + 1) * n]);
                            }
                        }
                    }
                }
            }
            Op::AddBias { a, b } => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.add_assign(g).expect("same shape");
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    let c = gb.len();
                    for row in g.data().chunks(c.max(1)) {
                        gb.data_mut().iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::Add { a, b } => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.add_assign(g).expect("same shape");
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    gb.add_assign(g).expect("same shape");
                }
            }
            Op::Sub { a, b } => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.add_assign(g).expect("same shape");
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    axpy(-1.0, g.data(), gb.data_mut());
                }
            }
            Op::Hadamard { a, b } => {
                let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((d, gi), bi) in ga.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                        *d += gi * bi;
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for ((d, gi), ai) in gb.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                        *d += gi * ai;
                    }
                }
            }
            Op::Scale { a, c } => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    axpy(*c, g.data(), ga.data_mut());
                }
            }
            Op::Tanh { a } => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((d, gi), y) in ga.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *d += gi * (1.0 - y * y);
                    }
                }
            }
            Op::Sigmoid { a } => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((d, gi), y) in ga.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *d += gi * y * (1.0 - y);
                    }
                }
            }
            Op::Concat { parts } => {
                let rows = out.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = nodes[p].value.cols();
                    if let Some(gp) = slot(nodes, grads, p) {
                        for r in 0..rows {
                            let src = &g.row(r)[offset..offset + w];
                            gp.data_mut()[r * w..(r + 1) * w]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(d, s)| *d += s);
                        }
                    }
                    offset += w;
                }
            }
            Op::Softmax { a } => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    let c = out.cols();
                    for r in 0..out.rows() {
                        let s = out.row(r);
                        let gr = g.row(r);
                        let inner = dot(gr, s);
                        let dst = &mut ga.data_mut()[r * c..(r + 1) * c];
                        for k in 0..c {
                            dst[k] += s[k] * (gr[k] - inner);
                        }
                    }
                }
            }
            Op::CrossEntropy { p, targets } => {
                let pv = &nodes[*p].value;
                let scale = g.data()[0] / targets.len() as f64;
                if let Some(gp) = slot(nodes, grads, *p) {
                    let c = pv.cols();
                    for (r, &t) in targets.iter().enumerate() {
                        let prob = pv.get(r, t);
                        if prob > LOG_CLAMP {
                            gp.data_mut()[r * c + t] -= scale / prob;
                        }
                    }
                }
            }
            Op::Dot { a, v } => {
                let (av, vv) = (&nodes[*a].value, &nodes[*v].value);
                let n = vv.len();
                if let Some(ga) = slot(nodes, grads, *a) {
                    for r in 0..av.rows() {
                        axpy(g.data()[r], vv.data(), &mut ga.data_mut()[r * n..(r + 1) * n]);
                    }
                }
                if let Some(gv) = slot(nodes, grads, *v) {
                    for r in 0..av.rows() {
                        axpy(g.data()[r], av.row(r), gv.data_mut());
                    }
                }
            }
            Op::WeightedSum { weights, items } => {
                let wv = &nodes[*weights].value;
                let rows = wv.rows();
                let h = out.cols();
                for (t, &it) in items.iter().enumerate() {
                    if let Some(gi) = slot(nodes, grads, it) {
                        for r in 0..rows {
                            axpy(wv.get(r, t), g.row(r), &mut gi.data_mut()[r * h..(r + 1) * h]);
                        }
                    }
                }
                if let Some(gw) = slot(nodes, grads, *weights) {
                    let tlen = items.len();
                    for (t, &it) in items.iter().enumerate() {
                        let iv = &nodes[it].value;
                        for r in 0..rows {
                            gw.data_mut()[r * tlen + t] += dot(g.row(r), iv.row(r));
                        }
                    }
                }
            }
        }
    }
}
