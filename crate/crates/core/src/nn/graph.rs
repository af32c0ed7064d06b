//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value and enough saved
//! state to run its backward rule. [`Graph::backward`] walks the tape from the
//! loss towards the leaves in reverse recording order.

use rand::Rng as _;

use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f32 = 0.797_884_6; // sqrt(2 / pi)

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    MatMulNT { a: Var, b: Var },
    Add { a: Var, b: Var },
    AddBias { x: Var, bias: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: f32 },
    Sum { x: Var },
    WeightedSum { terms: Vec<(Var, f32)> },
    Reshape { x: Var },
    Gelu { x: Var },
    Softmax { x: Var, outer: usize, len: usize, inner: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f32>, rstd: Vec<f32> },
    Embedding { table: Var, ids: Vec<u32> },
    GatherRows { x: Var, rows: Vec<usize> },
    Dropout { x: Var, scale: Vec<f32> },
    Attention { q: Var, k: Var, v: Var, probs: Vec<f32>, geom: AttnGeom },
    CrossEntropy { logits: Var, targets: Vec<i64>, ignore_index: i64, probs: Vec<f32>, denom: f64 },
}

#[derive(Clone, Copy, Debug)]
struct AttnGeom {
    batch: usize,
    seq: usize,
    heads: usize,
    head_dim: usize,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// The computation tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backward_done: bool,
}

/// Result of [`Graph::cross_entropy`].
#[derive(Clone, Copy, Debug)]
pub struct CrossEntropy {
    pub loss: Var,
    /// Number of positions that contributed. Zero means every position was
    /// ignored and the loss was defined as 0.
    pub counted: usize,
}

impl CrossEntropy {
    pub fn all_ignored(&self) -> bool {
        self.counted == 0
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Result<Var> {
        if !value.data().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("output of {}", op_name(&op))));
        }
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f32]> {
        self.nodes[v.0].value.grad()
    }

    /// Records a leaf. Gradients are accumulated for it when the tensor's
    /// `requires_grad` flag is set.
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        let needs = t.requires_grad();
        self.push(t, Op::Leaf, needs)
    }

    /// Records a copy of `t` as a differentiable leaf.
    pub fn param(&mut self, t: &Tensor) -> Result<Var> {
        let mut t = t.clone();
        t.clear_grad();
        t.set_requires_grad(true);
        self.push(t, Op::Leaf, true)
    }

    /// Records a copy of `t` as a constant.
    pub fn constant(&mut self, t: &Tensor) -> Result<Var> {
        let mut t = t.clone();
        t.clear_grad();
        t.set_requires_grad(false);
        self.push(t, Op::Leaf, false)
    }

    fn matrix(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        let s = self.shape(v);
        if s.len() != 2 {
            return Err(Error::Shape(format!("{what} expects a matrix, got shape {s:?}")));
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix(a, "matmul")?;
        let (k2, n) = self.matrix(b, "matmul")?;
        if k != k2 {
            return Err(Error::Shape(format!("matmul inner dimensions {k} and {k2} differ")));
        }
        let out = kernels::matmul_nn(self.value(a).data(), self.value(b).data(), m, k, n);
        let needs = self.needs(a) || self.needs(b);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul { a, b }, needs)
    }

    /// `a · bᵀ`, used for tied output projections.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix(a, "matmul_nt")?;
        let (n, k2) = self.matrix(b, "matmul_nt")?;
        if k != k2 {
            return Err(Error::Shape(format!("matmul_nt inner dimensions {k} and {k2} differ")));
        }
        let out = kernels::matmul_nt(self.value(a).data(), self.value(b).data(), m, k, n);
        let needs = self.needs(a) || self.needs(b);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMulNT { a, b }, needs)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        self.push(t, Op::Add { a, b }, needs)
    }

    /// Adds a vector along the trailing axis. The only broadcast supported.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, cols) = self.value(x).as_matrix();
        if self.shape(bias) != [cols] {
            return Err(Error::Shape(format!(
                "bias shape {:?} does not match trailing axis {cols}",
                self.shape(bias)
            )));
        }
        let b = self.value(bias).data();
        let data = self
            .value(x)
            .data()
            .chunks(cols)
            .flat_map(|row| row.iter().zip(b).map(|(v, c)| v + c))
            .collect();
        let t = Tensor::new(self.shape(x).to_vec(), data)?;
        let needs = self.needs(x) || self.needs(bias);
        self.push(t, Op::AddBias { x, bias }, needs)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        self.push(t, Op::Mul { a, b }, needs)
    }

    pub fn scale(&mut self, x: Var, factor: f32) -> Result<Var> {
        let data = self.value(x).data().iter().map(|v| v * factor).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data)?;
        let needs = self.needs(x);
        self.push(t, Op::Scale { x, factor }, needs)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.value(x).data().iter().map(|&v| f64::from(v)).sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s as f32), Op::Sum { x }, needs)
    }

    /// `Σ cᵢ·xᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f32)]) -> Result<Var> {
        if terms.is_empty() {
            return Err(Error::Contract("weighted_sum of no terms".into()));
        }
        let mut s = 0.0f64;
        for &(v, c) in terms {
            if !self.value(v).is_scalar() {
                return Err(Error::Shape(format!("weighted_sum term has shape {:?}", self.shape(v))));
            }
            s += f64::from(c) * f64::from(self.value(v).item());
        }
        let needs = terms.iter().any(|&(v, _)| self.needs(v));
        self.push(Tensor::scalar(s as f32), Op::WeightedSum { terms: terms.to_vec() }, needs)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).reshaped(shape)?;
        let needs = self.needs(x);
        self.push(t, Op::Reshape { x }, needs)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| 0.5 * v * (1.0 + (GELU_C * (v + 0.044_715 * v * v * v)).tanh()))
            .collect();
        let t = Tensor::new(self.shape(x).to_vec(), data)?;
        let needs = self.needs(x);
        self.push(t, Op::Gelu { x }, needs)
    }

    /// Softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Shape(format!("softmax axis {axis} out of range for {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(x).data();
        let mut out = vec![0.0f32; src.len()];
        let mut slice = vec![0.0f32; len];
        for o in 0..outer {
            for i in 0..inner {
                for j in 0..len {
                    slice[j] = src[(o * len + j) * inner + i];
                }
                kernels::softmax_in_place(&mut slice);
                for j in 0..len {
                    out[(o * len + j) * inner + i] = slice[j];
                }
            }
        }
        let needs = self.needs(x);
        self.push(Tensor::new(shape, out)?, Op::Softmax { x, outer, len, inner }, needs)
    }

    /// Layer normalization over the trailing axis.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (rows, cols) = self.value(x).as_matrix();
        if self.shape(gamma) != [cols] || self.shape(beta) != [cols] {
            return Err(Error::Shape(format!("layer_norm parameters must have shape [{cols}]")));
        }
        let src = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0f32; src.len()];
        let mut rstd = vec![0.0f32; rows];
        let mut out = vec![0.0f32; src.len()];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let mean = row.iter().map(|&v| f64::from(v)).sum::<f64>() / cols as f64;
            let var = row.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / cols as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd[r] = rs as f32;
            for c in 0..cols {
                let h = ((f64::from(row[c]) - mean) * rs) as f32;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * g[c] + b[c];
            }
        }
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(t, Op::LayerNorm { x, gamma, beta, xhat, rstd }, needs)
    }

    /// Row lookup: `table[ids[i]]` for each id, giving `[ids.len() × dim]`.
    pub fn embedding(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let (rows, dim) = self.matrix(table, "embedding")?;
        if ids.is_empty() {
            return Err(Error::Shape("embedding of zero ids".into()));
        }
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            let id = id as usize;
            if id >= rows {
                return Err(Error::Index(format!("embedding id {id} out of range {rows}")));
            }
            out.extend_from_slice(&src[id * dim..(id + 1) * dim]);
        }
        let needs = self.needs(table);
        self.push(
            Tensor::new(vec![ids.len(), dim], out)?,
            Op::Embedding { table, ids: ids.to_vec() },
            needs,
        )
    }

    /// Selects rows of a matrix.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let (n, dim) = self.matrix(x, "gather_rows")?;
        if rows.is_empty() {
            return Err(Error::Shape("gather_rows of zero rows".into()));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(rows.len() * dim);
        for &r in rows {
            if r >= n {
                return Err(Error::Index(format!("row {r} out of range {n}")));
            }
            out.extend_from_slice(&src[r * dim..(r + 1) * dim]);
        }
        let needs = self.needs(x);
        self.push(Tensor::new(vec![rows.len(), dim], out)?, Op::GatherRows { x, rows: rows.to_vec() }, needs)
    }

    /// Inverted dropout. `p == 0` records nothing and returns `x`.
    pub fn dropout(&mut self, x: Var, p: f32, rng: &mut Rng) -> Result<Var> {
        if p <= 0.0 {
            return Ok(x);
        }
        if p >= 1.0 {
            return Err(Error::Contract(format!("dropout probability {p} must be below 1")));
        }
        let keep = 1.0 / (1.0 - p);
        let scale: Vec<f32> = (0..self.value(x).numel())
            .map(|_| if rng.random::<f32>() < p { 0.0 } else { keep })
            .collect();
        let data = self.value(x).data().iter().zip(&scale).map(|(v, s)| v * s).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data)?;
        let needs = self.needs(x);
        self.push(t, Op::Dropout { x, scale }, needs)
    }

    /// Multi-head scaled dot-product attention over `[batch·seq × hidden]`
    /// projections. `key_valid[b·seq + j]` false removes key `j` of sequence
    /// `b` from every query's softmax.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        key_valid: &[bool],
        batch: usize,
        heads: usize,
    ) -> Result<Var> {
        let (rows, hidden) = self.matrix(q, "attention")?;
        self.same_shape(q, k, "attention")?;
        self.same_shape(q, v, "attention")?;
        if batch == 0 || rows % batch != 0 {
            return Err(Error::Shape(format!("{rows} rows do not split into {batch} sequences")));
        }
        if heads == 0 || hidden % heads != 0 {
            return Err(Error::Shape(format!("hidden {hidden} not divisible by {heads} heads")));
        }
        if key_valid.len() != rows {
            return Err(Error::Shape(format!("key mask has {} entries, want {rows}", key_valid.len())));
        }
        let geom = AttnGeom { batch, seq: rows / batch, heads, head_dim: hidden / heads };
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let AttnGeom { seq, head_dim, .. } = geom;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut probs = vec![0.0f32; batch * heads * seq * seq];
        let mut out = vec![0.0f32; rows * hidden];
        let mut acc = vec![0.0f64; head_dim];
        for b in 0..batch {
            for h in 0..heads {
                let off = h * head_dim;
                let p_base = (b * heads + h) * seq * seq;
                for i in 0..seq {
                    let qi = &qd[(b * seq + i) * hidden + off..][..head_dim];
                    let prow = &mut probs[p_base + i * seq..][..seq];
                    for j in 0..seq {
                        prow[j] = if key_valid[b * seq + j] {
                            let kj = &kd[(b * seq + j) * hidden + off..][..head_dim];
                            (kernels::dot(qi, kj) * scale) as f32
                        } else {
                            f32::NEG_INFINITY
                        };
                    }
                    kernels::softmax_in_place(prow);
                    acc.fill(0.0);
                    for j in 0..seq {
                        let p = f64::from(prow[j]);
                        if p == 0.0 {
                            continue;
                        }
                        let vj = &vd[(b * seq + j) * hidden + off..][..head_dim];
                        for (a, &x) in acc.iter_mut().zip(vj) {
                            *a += p * f64::from(x);
                        }
                    }
                    let orow = &mut out[(b * seq + i) * hidden + off..][..head_dim];
                    for (o, a) in orow.iter_mut().zip(&acc) {
                        *o = *a as f32;
                    }
                }
            }
        }
        let needs = self.needs(q) || self.needs(k) || self.needs(v);
        self.push(Tensor::new(vec![rows, hidden], out)?, Op::Attention { q, k, v, probs, geom }, needs)
    }

    /// Mean negative log-softmax probability of `targets` over rows of
    /// `logits[N×V]`, skipping rows whose target is `ignore_index`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[i64], ignore_index: i64) -> Result<CrossEntropy> {
        self.cross_entropy_with_denominator(logits, targets, ignore_index, None)
    }

    /// As [`Graph::cross_entropy`], but the summed loss is divided by
    /// `denominator` instead of the local count. Used to split one averaged
    /// loss across gradient-accumulation micro-batches.
    pub fn cross_entropy_with_denominator(
        &mut self,
        logits: Var,
        targets: &[i64],
        ignore_index: i64,
        denominator: Option<f64>,
    ) -> Result<CrossEntropy> {
        let (n, classes) = self.matrix(logits, "cross_entropy")?;
        if targets.len() != n {
            return Err(Error::Shape(format!("{} targets for {n} rows", targets.len())));
        }
        for &t in targets {
            if t != ignore_index && (t < 0 || t as usize >= classes) {
                return Err(Error::Index(format!("target {t} out of range {classes}")));
            }
        }
        let src = self.value(logits).data();
        let mut probs = vec![0.0f32; src.len()];
        let mut total = 0.0f64;
        let mut counted = 0usize;
        for r in 0..n {
            if targets[r] == ignore_index {
                continue;
            }
            let row = &src[r * classes..(r + 1) * classes];
            let lse = kernels::log_sum_exp(row);
            total += lse - f64::from(row[targets[r] as usize]);
            counted += 1;
            for (p, &v) in probs[r * classes..(r + 1) * classes].iter_mut().zip(row) {
                *p = (f64::from(v) - lse).exp() as f32;
            }
        }
        let denom = match denominator {
            Some(d) if d > 0.0 => d,
            Some(d) => return Err(Error::Contract(format!("cross_entropy denominator {d} must be positive"))),
            None => counted.max(1) as f64,
        };
        if counted == 0 {
            log::warn!("cross_entropy: every position ignored, loss defined as 0");
        }
        let needs = self.needs(logits);
        let loss = self.push(
            Tensor::scalar((total / denom) as f32),
            Op::CrossEntropy { logits, targets: targets.to_vec(), ignore_index, probs, denom },
            needs,
        )?;
        Ok(CrossEntropy { loss, counted })
    }

    /// Clears every gradient so `backward` may run again.
    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.value.clear_grad();
        }
        self.backward_done = false;
    }

    /// Back-propagates from a scalar `loss`, storing gradients on every node
    /// that depends on a differentiable leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Contract("backward called twice without zero_grad".into()));
        }
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads)?;
            self.nodes[idx].value.set_grad(g);
        }
        self.backward_done = true;
        for node in &self.nodes {
            if node.value.grad().is_some_and(|g| !g.iter().all(|v| v.is_finite())) {
                return Err(Error::NonFinite(format!("gradient of {}", op_name(&node.op))));
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f32], grads: &mut [Option<Vec<f32>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let mut send = |v: Var, delta: Vec<f32>| accumulate(grads, v, delta);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (m, k) = self.value(*a).as_matrix();
                let n = self.value(*b).shape()[1];
                if self.needs(*a) {
                    send(*a, kernels::matmul_nt(g, self.value(*b).data(), m, n, k));
                }
                if self.needs(*b) {
                    send(*b, kernels::matmul_tn(self.value(*a).data(), g, m, k, n));
                }
            }
            Op::MatMulNT { a, b } => {
                let (m, k) = self.value(*a).as_matrix();
                let n = self.value(*b).shape()[0];
                if self.needs(*a) {
                    send(*a, kernels::matmul_nn(g, self.value(*b).data(), m, n, k));
                }
                if self.needs(*b) {
                    send(*b, kernels::matmul_tn(g, self.value(*a).data(), m, n, k));
                }
            }
            Op::Add { a, b } => {
                if self.needs(*a) {
                    send(*a, g.to_vec());
                }
                if self.needs(*b) {
                    send(*b, g.to_vec());
                }
            }
            Op::AddBias { x, bias } => {
                if self.needs(*x) {
                    send(*x, g.to_vec());
                }
                if self.needs(*bias) {
                    let cols = self.value(*bias).numel();
                    let mut acc = vec![0.0f64; cols];
                    for row in g.chunks(cols) {
                        for (a, &v) in acc.iter_mut().zip(row) {
                            *a += f64::from(v);
                        }
                    }
                    send(*bias, acc.into_iter().map(|v| v as f32).collect());
                }
            }
            Op::Mul { a, b } => {
                if self.needs(*a) {
                    send(*a, g.iter().zip(self.value(*b).data()).map(|(g, y)| g * y).collect());
                }
                if self.needs(*b) {
                    send(*b, g.iter().zip(self.value(*a).data()).map(|(g, x)| g * x).collect());
                }
            }
            Op::Scale { x, factor } => send(*x, g.iter().map(|v| v * factor).collect()),
            Op::Sum { x } => send(*x, vec![g[0]; self.value(*x).numel()]),
            Op::WeightedSum { terms } => {
                for &(v, c) in terms {
                    if self.needs(v) {
                        send(v, vec![g[0] * c]);
                    }
                }
            }
            Op::Reshape { x } => send(*x, g.to_vec()),
            Op::Gelu { x } => {
                let d = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&v, &g)| {
                        let u = GELU_C * (v + 0.044_715 * v * v * v);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * 0.044_715 * v * v);
                        g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
                    })
                    .collect();
                send(*x, d);
            }
            Op::Softmax { x, outer, len, inner } => {
                let y = node.value.data();
                let mut d = vec![0.0f32; y.len()];
                for o in 0..*outer {
                    for i in 0..*inner {
                        let at = |j: usize| (o * len + j) * inner + i;
                        let dotp: f64 = (0..*len).map(|j| f64::from(y[at(j)]) * f64::from(g[at(j)])).sum();
                        for j in 0..*len {
                            d[at(j)] = (f64::from(y[at(j)]) * (f64::from(g[at(j)]) - dotp)) as f32;
                        }
                    }
                }
                send(*x, d);
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let cols = self.value(*gamma).numel();
                let gm = self.value(*gamma).data();
                if self.needs(*gamma) || self.needs(*beta) {
                    let mut dg = vec![0.0f64; cols];
                    let mut db = vec![0.0f64; cols];
                    for (grow, hrow) in g.chunks(cols).zip(xhat.chunks(cols)) {
                        for c in 0..cols {
                            dg[c] += f64::from(grow[c]) * f64::from(hrow[c]);
                            db[c] += f64::from(grow[c]);
                        }
                    }
                    if self.needs(*gamma) {
                        send(*gamma, dg.into_iter().map(|v| v as f32).collect());
                    }
                    if self.needs(*beta) {
                        send(*beta, db.into_iter().map(|v| v as f32).collect());
                    }
                }
                if self.needs(*x) {
                    let mut dx = vec![0.0f32; g.len()];
                    for (r, (grow, hrow)) in g.chunks(cols).zip(xhat.chunks(cols)).enumerate() {
                        let mut mean_d = 0.0f64;
                        let mut mean_dh = 0.0f64;
                        for c in 0..cols {
                            let dh = f64::from(grow[c]) * f64::from(gm[c]);
                            mean_d += dh;
                            mean_dh += dh * f64::from(hrow[c]);
                        }
                        mean_d /= cols as f64;
                        mean_dh /= cols as f64;
                        let rs = f64::from(rstd[r]);
                        for c in 0..cols {
                            let dh = f64::from(grow[c]) * f64::from(gm[c]);
                            dx[r * cols + c] = (rs * (dh - mean_d - f64::from(hrow[c]) * mean_dh)) as f32;
                        }
                    }
                    send(*x, dx);
                }
            }
            Op::Embedding { table, ids } => {
                let dim = self.value(*table).shape()[1];
                let mut d = vec![0.0f32; self.value(*table).numel()];
                for (i, &id) in ids.iter().enumerate() {
                    let id = id as usize;
                    for (a, &v) in d[id * dim..(id + 1) * dim].iter_mut().zip(&g[i * dim..(i + 1) * dim]) {
                        *a += v;
                    }
                }
                send(*table, d);
            }
            Op::GatherRows { x, rows } => {
                let dim = self.value(*x).shape()[1];
                let mut d = vec![0.0f32; self.value(*x).numel()];
                for (i, &r) in rows.iter().enumerate() {
                    for (a, &v) in d[r * dim..(r + 1) * dim].iter_mut().zip(&g[i * dim..(i + 1) * dim]) {
                        *a += v;
                    }
                }
                send(*x, d);
            }
            Op::Dropout { x, scale } => send(*x, g.iter().zip(scale).map(|(g, s)| g * s).collect()),
            Op::Attention { q, k, v, probs, geom } => {
                let (dq, dk, dv) = attention_backward(
                    g,
                    self.value(*q).data(),
                    self.value(*k).data(),
                    self.value(*v).data(),
                    probs,
                    *geom,
                );
                if self.needs(*q) {
                    send(*q, dq);
                }
                if self.needs(*k) {
                    send(*k, dk);
                }
                if self.needs(*v) {
                    send(*v, dv);
                }
            }
            Op::CrossEntropy { logits, targets, ignore_index, probs, denom } => {
                let classes = self.value(*logits).shape()[1];
                let scale = f64::from(g[0]) / denom;
                let mut d = vec![0.0f32; probs.len()];
                for (r, &t) in targets.iter().enumerate() {
                    if t == *ignore_index {
                        continue;
                    }
                    let row = &mut d[r * classes..(r + 1) * classes];
                    for (c, out) in row.iter_mut().enumerate() {
                        let p = f64::from(probs[r * classes + c]);
                        let y = if c == t as usize { 1.0 } else { 0.0 };
                        *out = ((p - y) * scale) as f32;
                    }
                }
                send(*logits, d);
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Vec<f32>>], v: Var, delta: Vec<f32>) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, d) in acc.iter_mut().zip(&delta) {
                *a += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

fn attention_backward(
    g: &[f32],
    qd: &[f32],
    kd: &[f32],
    vd: &[f32],
    probs: &[f32],
    geom: AttnGeom,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let AttnGeom { batch, seq, heads, head_dim } = geom;
    let hidden = heads * head_dim;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut dq = vec![0.0f32; qd.len()];
    let mut dk = vec![0.0f32; kd.len()];
    let mut dv = vec![0.0f32; vd.len()];
    let mut ds = vec![0.0f64; seq];
    for b in 0..batch {
        for h in 0..heads {
            let off = h * head_dim;
            let p_base = (b * heads + h) * seq * seq;
            let row_at = |i: usize| (b * seq + i) * hidden + off;
            for i in 0..seq {
                let prow = &probs[p_base + i * seq..][..seq];
                let gi = &g[row_at(i)..][..head_dim];
                let mut weighted = 0.0f64;
                for j in 0..seq {
                    let p = prow[j];
                    if p == 0.0 {
                        ds[j] = 0.0;
                        continue;
                    }
                    let dp = kernels::dot(gi, &vd[row_at(j)..][..head_dim]);
                    ds[j] = dp;
                    weighted += f64::from(p) * dp;
                    for (d, &x) in dv[row_at(j)..][..head_dim].iter_mut().zip(gi) {
                        *d += p * x;
                    }
                }
                let qi = &qd[row_at(i)..][..head_dim];
                for j in 0..seq {
                    let p = f64::from(prow[j]);
                    if p == 0.0 {
                        continue;
                    }
                    let s = p * (ds[j] - weighted) * scale;
                    let kj = &kd[row_at(j)..][..head_dim];
                    for (d, &x) in dq[row_at(i)..][..head_dim].iter_mut().zip(kj) {
                        *d += (s * f64::from(x)) as f32;
                    }
                    for (d, &x) in dk[row_at(j)..][..head_dim].iter_mut().zip(qi) {
                        *d += (s * f64::from(x)) as f32;
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul { .. } => "matmul",
        Op::MatMulNT { .. } => "matmul_nt",
        Op::Add { .. } => "add",
        Op::AddBias { .. } => "add_bias",
        Op::Mul { .. } => "mul",
        Op::Scale { .. } => "scale",
        Op::Sum { .. } => "sum",
        Op::WeightedSum { .. } => "weighted_sum",
        Op::Reshape { .. } => "reshape",
        Op::Gelu { .. } => "gelu",
        Op::Softmax { .. } => "softmax",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Embedding { .. } => "embedding",
        Op::GatherRows { .. } => "gather_rows",
        Op::Dropout { .. } => "dropout",
        Op::Attention { .. } => "attention",
        Op::CrossEntropy { .. } => "cross_entropy",
    }
}
