//! Reverse-mode differentiation over a recorded tape of matrix operations.
//!
//! A [`Graph`] is built fresh for every forward pass. Parameters are pulled
//! in by name from a [`ParamStore`]; [`Graph::grad`] then returns one gradient
//! tensor per stored parameter.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::numerics::kernels::{self, gemm, AttnSegment, View};
use crate::numerics::{ParamStore, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Relu(Var),
    Sigmoid(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        segments: Vec<AttnSegment>,
        probs: Vec<f64>,
    },
    SelectRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    SegmentMean(Var, Vec<(usize, usize)>),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

fn dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
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

    fn push(&mut self, op: &'static str, value: Tensor, node_op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op: node_op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push("constant", value, Op::Leaf, &[])
    }

    /// Differentiable leaf that is not backed by the parameter store.
    pub fn variable(&mut self, value: Tensor) -> Result<Var> {
        let v = self.push("variable", value, Op::Leaf, &[])?;
        self.nodes[v.0].requires_grad = true;
        Ok(v)
    }

    /// Leaf holding a copy of the named parameter. Repeated requests for the
    /// same name return the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?
            .clone();
        let v = self.variable(value)?;
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// `a (n x k) * b (k x m)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((n, k), (k2, m)) = (dims(self.value(a)), dims(self.value(b)));
        if k != k2 {
            return Err(Error::shape("matmul", format!("{n}x{k} * {k2}x{m}")));
        }
        let mut out = vec![0.0; n * m];
        gemm(
            n,
            k,
            m,
            1.0,
            View::rm(self.value(a).data(), k),
            View::rm(self.value(b).data(), m),
            0.0,
            &mut out,
            0,
            m,
        );
        self.push("matmul", Tensor::from_parts(vec![n, m], out), Op::MatMul(a, b), &[a, b])
    }

    /// Adds a `1 x m` row (or length-`m` vector) to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (n, m) = dims(self.value(x));
        let r = self.value(row);
        if r.numel() != m {
            return Err(Error::shape("add_row", format!("{n}x{m} + row of {}", r.numel())));
        }
        let mut out = self.value(x).data().to_vec();
        for chunk in out.chunks_mut(m) {
            for (o, b) in chunk.iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        self.push("add_row", Tensor::from_parts(vec![n, m], out), Op::AddRow(x, row), &[x, row])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (da, db) = (dims(self.value(a)), dims(self.value(b)));
        if da != db {
            return Err(Error::shape(op, format!("{da:?} vs {db:?}")));
        }
        Ok(da)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, m) = self.same_shape("add", a, b)?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        self.push("add", Tensor::from_parts(vec![n, m], out), Op::Add(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, m) = self.same_shape("mul", a, b)?;
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        self.push("mul", Tensor::from_parts(vec![n, m], out), Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let (n, m) = dims(self.value(x));
        let out = self.value(x).data().iter().map(|v| v * factor).collect();
        self.push("scale", Tensor::from_parts(vec![n, m], out), Op::Scale(x, factor), &[x])
    }

    fn unary(&mut self, op: &'static str, x: Var, f: impl Fn(f64) -> f64, node_op: Op) -> Result<Var> {
        let (n, m) = dims(self.value(x));
        let out = self.value(x).data().iter().map(|&v| f(v)).collect();
        self.push(op, Tensor::from_parts(vec![n, m], out), node_op, &[x])
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.unary("gelu", x, kernels::gelu, Op::Gelu(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary("relu", x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary("sigmoid", x, kernels::sigmoid, Op::Sigmoid(x))
    }

    /// Row-wise layer normalization.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (n, m) = dims(self.value(x));
        if self.value(gamma).numel() != m || self.value(beta).numel() != m {
            return Err(Error::shape(
                "layer_norm",
                format!(
                    "width {m}, gamma {}, beta {}",
                    self.value(gamma).numel(),
                    self.value(beta).numel()
                ),
            ));
        }
        let mut out = vec![0.0; n * m];
        let mut xhat = vec![0.0; n * m];
        let mut inv_std = Vec::with_capacity(n);
        {
            let (xv, gv, bv) = (self.value(x).data(), self.value(gamma).data(), self.value(beta).data());
            for i in 0..n {
                let r = i * m..(i + 1) * m;
                inv_std.push(kernels::layer_norm_row(
                    &xv[r.clone()],
                    gv,
                    bv,
                    eps,
                    &mut out[r.clone()],
                    &mut xhat[r],
                ));
            }
        }
        self.push(
            "layer_norm",
            Tensor::from_parts(vec![n, m], out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    /// Multi-head scaled dot-product attention restricted to `segments`.
    /// Query rows outside every segment produce zeros. With `causal`, query
    /// `i` of a segment only sees keys `0..=i` of that segment.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        segments: &[AttnSegment],
        causal: bool,
    ) -> Result<Var> {
        let ((nq, w), (nk, wk), (nv, wv)) = (dims(self.value(q)), dims(self.value(k)), dims(self.value(v)));
        if heads == 0 || w % heads != 0 || wk != w || wv != w || nk != nv {
            return Err(Error::shape(
                "attention",
                format!("Q {nq}x{w}, K {nk}x{wk}, V {nv}x{wv}, {heads} heads"),
            ));
        }
        for s in segments {
            if s.q_start + s.q_len > nq || s.k_start + s.k_len > nk || s.k_len == 0 {
                return Err(Error::shape("attention", format!("segment {s:?} outside {nq}x{nk}")));
            }
            if causal && s.q_len > s.k_len {
                return Err(Error::FullyMaskedRow { row: s.q_start + s.k_len });
            }
        }
        let (out, probs) = kernels::mha_forward(
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
            nq,
            w,
            heads,
            segments,
            causal,
        );
        self.push(
            "attention",
            Tensor::from_parts(vec![nq, w], out),
            Op::Attention {
                q,
                k,
                v,
                heads,
                segments: segments.to_vec(),
                probs,
            },
            &[q, k, v],
        )
    }

    /// Gathers rows of `x` by index (embedding lookup, reordering, tiling).
    pub fn select_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let (n, m) = dims(self.value(x));
        if indices.is_empty() {
            return Err(Error::Empty("select_rows indices"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::shape("select_rows", format!("row {bad} of {n}")));
        }
        let src = self.value(x);
        let mut out = Vec::with_capacity(indices.len() * m);
        for &i in indices {
            out.extend_from_slice(src.row(i));
        }
        self.push(
            "select_rows",
            Tensor::from_parts(vec![indices.len(), m], out),
            Op::SelectRows(x, indices.to_vec()),
            &[x],
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let m = match parts.first() {
            Some(&p) => self.value(p).cols(),
            None => return Err(Error::Empty("concat_rows parts")),
        };
        let mut out = Vec::new();
        let mut n = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != m {
                return Err(Error::shape("concat_rows", format!("widths {m} and {}", t.cols())));
            }
            out.extend_from_slice(t.data());
            n += t.rows();
        }
        self.push(
            "concat_rows",
            Tensor::from_parts(vec![n, m], out),
            Op::ConcatRows(parts.to_vec()),
            parts,
        )
    }

    /// Mean of each `(start, len)` block of rows; one output row per block.
    pub fn segment_mean(&mut self, x: Var, segments: &[(usize, usize)]) -> Result<Var> {
        let (n, m) = dims(self.value(x));
        if segments.is_empty() {
            return Err(Error::Empty("segment_mean segments"));
        }
        let mut out = vec![0.0; segments.len() * m];
        for (si, &(start, len)) in segments.iter().enumerate() {
            if len == 0 || start + len > n {
                return Err(Error::shape("segment_mean", format!("segment ({start}, {len}) of {n} rows")));
            }
            let o = &mut out[si * m..(si + 1) * m];
            for r in start..start + len {
                for (a, b) in o.iter_mut().zip(self.nodes[x.0].value.row(r)) {
                    *a += b;
                }
            }
            let inv = 1.0 / len as f64;
            o.iter_mut().for_each(|a| *a *= inv);
        }
        self.push(
            "segment_mean",
            Tensor::from_parts(vec![segments.len(), m], out),
            Op::SegmentMean(x, segments.to_vec()),
            &[x],
        )
    }

    /// Mean cross-entropy over the rows of `logits`, one target per row.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (n, m) = dims(self.value(logits));
        if targets.len() != n {
            return Err(Error::shape("cross_entropy", format!("{n} rows, {} targets", targets.len())));
        }
        let mut probs = self.value(logits).data().to_vec();
        let mut total = 0.0;
        for (row, &t) in probs.chunks_mut(m).zip(targets) {
            if t >= m {
                return Err(Error::TargetOutOfRange { index: t, classes: m });
            }
            total += kernels::neg_log_softmax(row, t);
            kernels::softmax_in_place(row);
        }
        self.push(
            "cross_entropy",
            Tensor::scalar(total / n as f64),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Gradient of a scalar node with respect to every parameter of `store`.
    /// Parameters that never entered the graph get zero gradients.
    pub fn grad(&self, loss: Var, store: &ParamStore) -> Result<BTreeMap<String, Tensor>> {
        let grads = self.backward(loss)?;
        let mut out = BTreeMap::new();
        for (name, value) in store.iter() {
            let g = match self.params.get(name).and_then(|v| grads[v.0].clone()) {
                Some(data) => Tensor::from_parts(value.shape().to_vec(), data),
                None => Tensor::zeros(value.shape()),
            };
            out.insert(name.clone(), g);
        }
        Ok(out)
    }

    /// Raw gradient buffers for every node (`None` where no gradient flows).
    pub fn backward(&self, loss: Var) -> Result<Vec<Option<Vec<f64>>>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape(
                "grad",
                format!("loss must be scalar, got shape {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
        f(slot);
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = dims(self.value(*a));
                let m = self.value(*b).cols();
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                // dA = G B^T ; dB = A^T G
                self.accumulate(grads, *a, |da| {
                    gemm(n, m, k, 1.0, View::rm(g, m), View::rm_t(bv, m), 1.0, da, 0, k)
                });
                self.accumulate(grads, *b, |db| {
                    gemm(k, n, m, 1.0, View::rm_t(av, k), View::rm(g, m), 1.0, db, 0, m)
                });
            }
            Op::AddRow(x, row) => {
                self.accumulate(grads, *x, |dx| add_into(dx, g));
                let m = self.value(*x).cols();
                self.accumulate(grads, *row, |dr| {
                    for chunk in g.chunks(m) {
                        add_into(dr, chunk);
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |d| add_into(d, g));
                self.accumulate(grads, *b, |d| add_into(d, g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * bv[i];
                    }
                });
                self.accumulate(grads, *b, |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * av[i];
                    }
                });
            }
            Op::Scale(x, f) => self.accumulate(grads, *x, |d| {
                for (di, gi) in d.iter_mut().zip(g) {
                    *di += gi * f;
                }
            }),
            Op::Gelu(x) => {
                let xv = self.value(*x).data();
                self.accumulate(grads, *x, |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * kernels::gelu_grad(xv[i]);
                    }
                })
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                self.accumulate(grads, *x, |d| {
                    for i in 0..d.len() {
                        if xv[i] > 0.0 {
                            d[i] += g[i];
                        }
                    }
                })
            }
            Op::Sigmoid(x) => {
                let yv = node.value.data();
                self.accumulate(grads, *x, |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * yv[i] * (1.0 - yv[i]);
                    }
                })
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let m = self.value(*x).cols();
                let gv = self.value(*gamma).data();
                self.accumulate(grads, *gamma, |dg| {
                    for (gr, xr) in g.chunks(m).zip(xhat.chunks(m)) {
                        for j in 0..m {
                            dg[j] += gr[j] * xr[j];
                        }
                    }
                });
                self.accumulate(grads, *beta, |db| {
                    for gr in g.chunks(m) {
                        add_into(db, gr);
                    }
                });
                self.accumulate(grads, *x, |dx| {
                    let mf = m as f64;
                    for (i, (gr, xr)) in g.chunks(m).zip(xhat.chunks(m)).enumerate() {
                        let mut sum_dy = 0.0;
                        let mut sum_dy_x = 0.0;
                        for j in 0..m {
                            let dy = gr[j] * gv[j];
                            sum_dy += dy;
                            sum_dy_x += dy * xr[j];
                        }
                        let s = inv_std[i];
                        let out = &mut dx[i * m..(i + 1) * m];
                        for j in 0..m {
                            let dy = gr[j] * gv[j];
                            out[j] += s * (dy - sum_dy / mf - xr[j] * sum_dy_x / mf);
                        }
                    }
                });
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                segments,
                probs,
            } => {
                let w = self.value(*q).cols();
                let mut dq = vec![0.0; self.value(*q).numel()];
                let mut dk = vec![0.0; self.value(*k).numel()];
                let mut dv = vec![0.0; self.value(*v).numel()];
                kernels::mha_backward(
                    self.value(*q).data(),
                    self.value(*k).data(),
                    self.value(*v).data(),
                    probs,
                    g,
                    w,
                    *heads,
                    segments,
                    &mut dq,
                    &mut dk,
                    &mut dv,
                );
                self.accumulate(grads, *q, |d| add_into(d, &dq));
                self.accumulate(grads, *k, |d| add_into(d, &dk));
                self.accumulate(grads, *v, |d| add_into(d, &dv));
            }
            Op::SelectRows(x, idx) => {
                let m = self.value(*x).cols();
                self.accumulate(grads, *x, |d| {
                    for (r, &i) in idx.iter().enumerate() {
                        add_into(&mut d[i * m..(i + 1) * m], &g[r * m..(r + 1) * m]);
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.value(*p).numel();
                    self.accumulate(grads, *p, |d| add_into(d, &g[off..off + len]));
                    off += len;
                }
            }
            Op::SegmentMean(x, segs) => {
                let m = self.value(*x).cols();
                self.accumulate(grads, *x, |d| {
                    for (si, &(start, len)) in segs.iter().enumerate() {
                        let inv = 1.0 / len as f64;
                        let gr = &g[si * m..(si + 1) * m];
                        for r in start..start + len {
                            for (dj, gj) in d[r * m..(r + 1) * m].iter_mut().zip(gr) {
                                *dj += gj * inv;
                            }
                        }
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let m = self.value(*logits).cols();
                let scale = g[0] / targets.len() as f64;
                self.accumulate(grads, *logits, |d| {
                    for (r, &t) in targets.iter().enumerate() {
                        let p = &probs[r * m..(r + 1) * m];
                        let dr = &mut d[r * m..(r + 1) * m];
                        for j in 0..m {
                            dr[j] += scale * (p[j] - if j == t { 1.0 } else { 0.0 });
                        }
                    }
                });
            }
            Op::Sum(x) => self.accumulate(grads, *x, |d| d.iter_mut().for_each(|v| *v += g[0])),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Init;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store_with(name: &str, shape: &[usize], data: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert(name, Tensor::new(shape.to_vec(), data).unwrap()).unwrap();
        s
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let store = store_with("p", &[2, 3], vec![0.5, -1.0, 2.0, 3.0, 0.0, 1.5]);
        let mut g = Graph::new();
        let p = g.param(&store, "p").unwrap();
        let loss = g.sum(p).unwrap();
        let grads = g.grad(loss, &store).unwrap();
        assert_eq!(grads["p"].data(), &[1.0; 6]);
    }

    #[test]
    fn grad_of_half_square_is_identity() {
        let data = vec![0.5, -1.0, 2.0, 3.0];
        let store = store_with("p", &[4], data.clone());
        let mut g = Graph::new();
        let p = g.param(&store, "p").unwrap();
        let sq = g.mul(p, p).unwrap();
        let s = g.sum(sq).unwrap();
        let loss = g.scale(s, 0.5).unwrap();
        let grads = g.grad(loss, &store).unwrap();
        assert_eq!(grads["p"].data(), data.as_slice());
    }

    #[test]
    fn unused_params_get_zero_gradient() {
        let mut store = store_with("p", &[2], vec![1.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        store.register("unused", &[3, 2], Init::Normal(1.0), &mut rng).unwrap();
        let mut g = Graph::new();
        let p = g.param(&store, "p").unwrap();
        let loss = g.sum(p).unwrap();
        let grads = g.grad(loss, &store).unwrap();
        assert_eq!(grads["unused"], Tensor::zeros(&[3, 2]));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let store = store_with("p", &[2], vec![1.0, 2.0]);
        let mut g = Graph::new();
        let p = g.param(&store, "p").unwrap();
        assert!(matches!(g.grad(p, &store), Err(Error::Shape { .. })));
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![1e300, 1.0]).unwrap()).unwrap();
        assert!(matches!(g.mul(a, a), Err(Error::NonFinite { op: "mul" })));
    }

    #[test]
    fn graph_attention_matches_reference() {
        let mut g = Graph::new();
        let q = Tensor::from_rows(&[vec![0.1, 0.4], vec![-0.3, 0.9], vec![1.2, -0.5]]).unwrap();
        let k = Tensor::from_rows(&[vec![0.7, 0.2], vec![-1.0, 0.3], vec![0.0, 0.8]]).unwrap();
        let v = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.25]]).unwrap();
        let (qv, kv, vv) = (
            g.constant(q.clone()).unwrap(),
            g.constant(k.clone()).unwrap(),
            g.constant(v.clone()).unwrap(),
        );
        let out = g
            .attention(qv, kv, vv, 1, &[AttnSegment::square(0, 3)], true)
            .unwrap();
        let mask = [true, false, false, true, true, false, true, true, true];
        let reference = kernels::attention(&q, &k, &v, Some(&mask)).unwrap();
        for (a, b) in g.value(out).data().iter().zip(reference.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
