//! Wengert-list reverse-mode differentiation.
//!
//! Every forward operation appends a node holding its output value and the
//! indices of its inputs. `backward` walks the list in reverse execution order
//! and accumulates adjoints into every node that (transitively) depends on a
//! parameter leaf.

use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{matmul_raw, transpose_raw, Tensor};
use crate::error::{Result, TassError};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Sum-to-one tolerance for probability vectors fed to `js_divergence`.
pub const PROBABILITY_SUM_TOL: f64 = 1e-6;

/// Handle to a value recorded on a specific [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    Sigmoid(usize),
    Softmax(usize),
    ConcatLast(usize, usize),
    ConcatRows(Vec<usize>),
    MeanAxis { input: usize, axis: usize },
    Sum(usize),
    Reshape(usize),
    GatherRows { input: usize, indices: Vec<usize> },
    GatherLast { input: usize, indices: Vec<usize> },
    Mask { input: usize, keep: Vec<bool> },
    Renormalize(usize),
    CrossEntropy { logits: usize, labels: Vec<usize> },
    JsDivergence(usize, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Operation record for one forward/backward pair.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a constant input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    /// Records a differentiable input whose gradient is populated by `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, true, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable belongs to another tape");
        &self.nodes[v.index].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.index].requires_grad
    }

    /// Gradient of the last backward's loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.id {
            return None;
        }
        self.grads.get(v.index).and_then(Option::as_ref)
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var {
            tape: self.id,
            index,
        }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(TassError::StaleTape(
                "variable was recorded on a different tape".into(),
            ));
        }
        Ok(v.index)
    }

    fn shape(&self, i: usize) -> &[usize] {
        self.nodes[i].value.shape()
    }

    fn data(&self, i: usize) -> &[f64] {
        self.nodes[i].value.data()
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn record(&mut self, shape: &[usize], data: Vec<f64>, inputs: &[usize], op: Op) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.rg(i));
        let value = Tensor::new(shape, data).expect("op produced consistent shape");
        self.push(value, requires_grad, op)
    }

    fn same_shape(&self, op: &'static str, a: usize, b: usize) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(TassError::Dimension {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn dims2(&self, op: &'static str, i: usize) -> Result<(usize, usize)> {
        match self.shape(i) {
            &[m, n] => Ok((m, n)),
            s => Err(TassError::Dimension {
                op,
                lhs: s.to_vec(),
                rhs: vec![],
            }),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        let (m, k) = self.dims2("matmul", a)?;
        let (k2, n) = self.dims2("matmul", b)?;
        if k != k2 {
            return Err(TassError::Dimension {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let out = matmul_raw(self.data(a), self.data(b), m, k, n);
        Ok(self.record(&[m, n], out, &[a, b], Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        let (m, n) = self.dims2("transpose", a)?;
        let out = transpose_raw(self.data(a), m, n);
        Ok(self.record(&[n, m], out, &[a], Op::Transpose(a)))
    }

    fn zip_op(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: impl FnOnce(usize, usize) -> Op,
    ) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        self.same_shape(name, a, b)?;
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.record(&shape, out, &[a, b], op(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("sub", a, b, |x, y| x - y, Op::Sub)
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op("mul", a, b, |x, y| x * y, Op::Mul)
    }

    fn map_op(&mut self, a: Var, f: impl Fn(f64) -> f64, op: impl FnOnce(usize) -> Op) -> Result<Var> {
        let a = self.check(a)?;
        let out = self.data(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.record(&shape, out, &[a], op(a)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map_op(a, |x| c * x, |a| Op::Scale(a, c))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map_op(a, f64::tanh, Op::Tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map_op(a, sigmoid, Op::Sigmoid)
    }

    /// Softmax over the trailing axis, with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        if self.shape(a).is_empty() {
            return Err(TassError::Dimension {
                op: "softmax",
                lhs: vec![],
                rhs: vec![],
            });
        }
        let n = self.nodes[a].value.last_dim();
        let mut out = self.data(a).to_vec();
        for slice in out.chunks_mut(n) {
            softmax_in_place(slice);
        }
        let shape = self.shape(a).to_vec();
        Ok(self.record(&shape, out, &[a], Op::Softmax(a)))
    }

    /// Concatenation along the trailing axis; leading axes must agree.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.is_empty() || sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(TassError::Dimension {
                op: "concat_last",
                lhs: sa,
                rhs: sb,
            });
        }
        let (na, nb) = (sa[sa.len() - 1], sb[sb.len() - 1]);
        let mut out = Vec::with_capacity(self.data(a).len() + self.data(b).len());
        for (ra, rb) in self.data(a).chunks(na).zip(self.data(b).chunks(nb)) {
            out.extend_from_slice(ra);
            out.extend_from_slice(rb);
        }
        let mut shape = sa;
        *shape.last_mut().unwrap() = na + nb;
        Ok(self.record(&shape, out, &[a, b], Op::ConcatLast(a, b)))
    }

    /// Stacks rank-2 tensors with equal column counts along axis 0.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(TassError::Contract("concat_rows of nothing".into()));
        }
        let idx = parts
            .iter()
            .map(|&v| self.check(v))
            .collect::<Result<Vec<_>>>()?;
        let (_, n) = self.dims2("concat_rows", idx[0])?;
        let mut rows = 0;
        for &i in &idx {
            let (m, n2) = self.dims2("concat_rows", i)?;
            if n2 != n {
                return Err(TassError::Dimension {
                    op: "concat_rows",
                    lhs: self.shape(idx[0]).to_vec(),
                    rhs: self.shape(i).to_vec(),
                });
            }
            rows += m;
        }
        let mut out = Vec::with_capacity(rows * n);
        for &i in &idx {
            out.extend_from_slice(self.data(i));
        }
        Ok(self.record(&[rows, n], out, &idx, Op::ConcatRows(idx.clone())))
    }

    /// Arithmetic mean over `axis`; the axis is removed from the shape.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let a = self.check(a)?;
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(TassError::Dimension {
                op: "mean_axis",
                lhs: shape,
                rhs: vec![axis],
            });
        }
        let (outer, extent, inner) = split_axis(&shape, axis);
        let src = self.data(a);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..extent {
                let base = (o * extent + k) * inner;
                for i in 0..inner {
                    out[o * inner + i] += src[base + i];
                }
            }
        }
        let inv = 1.0 / extent as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        let mut out_shape = shape;
        out_shape.remove(axis);
        Ok(self.record(&out_shape, out, &[a], Op::MeanAxis { input: a, axis }))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        let s = self.data(a).iter().sum();
        Ok(self.record(&[], vec![s], &[a], Op::Sum(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let a = self.check(a)?;
        let numel: usize = shape.iter().product();
        if numel != self.data(a).len() || shape.contains(&0) {
            return Err(TassError::Dimension {
                op: "reshape",
                lhs: self.shape(a).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let out = self.data(a).to_vec();
        Ok(self.record(shape, out, &[a], Op::Reshape(a)))
    }

    /// Selects rows of a rank-2 tensor, in the given order (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let a = self.check(a)?;
        let (m, n) = self.dims2("gather_rows", a)?;
        if indices.is_empty() {
            return Err(TassError::Contract("gather_rows with no indices".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&r| r >= m) {
            return Err(TassError::Index(format!("row {bad} of {m}")));
        }
        let src = self.data(a);
        let mut out = Vec::with_capacity(indices.len() * n);
        for &r in indices {
            out.extend_from_slice(&src[r * n..(r + 1) * n]);
        }
        Ok(self.record(
            &[indices.len(), n],
            out,
            &[a],
            Op::GatherRows {
                input: a,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Selects entries along the trailing axis (column slicing for matrices).
    pub fn gather_last(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let a = self.check(a)?;
        let shape = self.shape(a).to_vec();
        if shape.is_empty() || indices.is_empty() {
            return Err(TassError::Contract("gather_last needs rank ≥ 1 and indices".into()));
        }
        let n = shape[shape.len() - 1];
        if let Some(&bad) = indices.iter().find(|&&c| c >= n) {
            return Err(TassError::Index(format!("column {bad} of {n}")));
        }
        let out: Vec<f64> = self
            .data(a)
            .chunks(n)
            .flat_map(|row| indices.iter().map(move |&c| row[c]))
            .collect();
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = indices.len();
        Ok(self.record(
            &out_shape,
            out,
            &[a],
            Op::GatherLast {
                input: a,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Contiguous column range `[start, start + len)` of the trailing axis.
    pub fn slice_last(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let indices: Vec<usize> = (start..start + len).collect();
        self.gather_last(a, &indices)
    }

    /// Keeps entries `>= tau`, zeroes the rest. The keep-mask is treated as a
    /// constant: gradient flows through retained entries only.
    pub fn threshold_gate(&mut self, a: Var, tau: f64) -> Result<Var> {
        let a = self.check(a)?;
        let keep: Vec<bool> = self.data(a).iter().map(|&x| x - tau >= 0.0).collect();
        let out = self
            .data(a)
            .iter()
            .zip(&keep)
            .map(|(&x, &k)| if k { x } else { 0.0 })
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.record(&shape, out, &[a], Op::Mask { input: a, keep }))
    }

    /// `x / sum(x)` over all entries. NaN propagates rather than erroring.
    pub fn renormalize(&mut self, a: Var) -> Result<Var> {
        let a = self.check(a)?;
        let s: f64 = self.data(a).iter().sum();
        if s <= 0.0 {
            return Err(TassError::Domain(format!("cannot renormalize, total mass {s}")));
        }
        let out = self.data(a).iter().map(|&x| x / s).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.record(&shape, out, &[a], Op::Renormalize(a)))
    }

    /// Batch-mean of `-log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let l = self.check(logits)?;
        let (b, c) = self.dims2("cross_entropy", l)?;
        if labels.len() != b {
            return Err(TassError::Dimension {
                op: "cross_entropy",
                lhs: vec![b, c],
                rhs: vec![labels.len()],
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
            return Err(TassError::Index(format!("label {bad} out of range for {c} classes")));
        }
        let mut total = 0.0;
        for (row, &y) in self.data(l).chunks(c).zip(labels) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        Ok(self.record(
            &[],
            vec![total / b as f64],
            &[l],
            Op::CrossEntropy {
                logits: l,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Jensen-Shannon divergence in nats between two probability vectors of
    /// equal shape (flattened), with `0 · log 0 = 0`.
    pub fn js_divergence(&mut self, p: Var, q: Var) -> Result<Var> {
        let (p, q) = (self.check(p)?, self.check(q)?);
        self.same_shape("js_divergence", p, q)?;
        check_probability(self.data(p), "p")?;
        check_probability(self.data(q), "q")?;
        let value = js_value(self.data(p), self.data(q));
        Ok(self.record(&[], vec![value], &[p, q], Op::JsDivergence(p, q)))
    }

    /// Populates gradients of the scalar `loss` on every reachable input.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.backward_seeded(loss, 1.0, &[])
    }

    /// Backward pass from `loss_scale · loss`, plus extra upstream adjoints
    /// injected at intermediate nodes (used when part of the objective was
    /// computed on another tape).
    pub fn backward_seeded(&mut self, loss: Var, loss_scale: f64, seeds: &[(Var, Tensor)]) -> Result<()> {
        let l = self.check(loss)?;
        if self.backward_done {
            return Err(TassError::StaleTape(
                "backward already ran on this tape; record a new forward first".into(),
            ));
        }
        if self.nodes[l].value.numel() != 1 {
            return Err(TassError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(l)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[l] = Some(vec![loss_scale]);
        for (v, g) in seeds {
            let i = self.check(*v)?;
            if g.shape() != self.shape(i) {
                return Err(TassError::Dimension {
                    op: "backward_seeded",
                    lhs: self.shape(i).to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            accumulate(&mut grads, i, g.data());
        }
        self.backward_done = true;

        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        self.grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| match g {
                Some(g) if node.requires_grad => {
                    Some(Tensor::new(node.value.shape(), g).expect("grad shape"))
                }
                _ => None,
            })
            .collect();
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = self.nodes[i].value.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = self.nodes[a].value.dims2().unwrap();
                let n = self.nodes[b].value.last_dim();
                if self.rg(a) {
                    let bt = transpose_raw(self.data(b), k, n);
                    accumulate(grads, a, &matmul_raw(g, &bt, m, n, k));
                }
                if self.rg(b) {
                    let at = transpose_raw(self.data(a), m, k);
                    accumulate(grads, b, &matmul_raw(&at, g, k, m, n));
                }
            }
            &Op::Transpose(a) => {
                let (m, n) = self.nodes[a].value.dims2().unwrap();
                accumulate(grads, a, &transpose_raw(g, n, m));
            }
            &Op::Add(a, b) => {
                self.acc_if(grads, a, g);
                self.acc_if(grads, b, g);
            }
            &Op::Sub(a, b) => {
                self.acc_if(grads, a, g);
                if self.rg(b) {
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    accumulate(grads, b, &neg);
                }
            }
            &Op::Mul(a, b) => {
                if self.rg(a) {
                    accumulate(grads, a, &hadamard(g, self.data(b)));
                }
                if self.rg(b) {
                    accumulate(grads, b, &hadamard(g, self.data(a)));
                }
            }
            &Op::Scale(a, c) => {
                let d: Vec<f64> = g.iter().map(|v| c * v).collect();
                accumulate(grads, a, &d);
            }
            &Op::Tanh(a) => {
                let d: Vec<f64> = g.iter().zip(out).map(|(g, y)| g * (1.0 - y * y)).collect();
                accumulate(grads, a, &d);
            }
            &Op::Sigmoid(a) => {
                let d: Vec<f64> = g.iter().zip(out).map(|(g, y)| g * y * (1.0 - y)).collect();
                accumulate(grads, a, &d);
            }
            &Op::Softmax(a) => {
                let n = self.nodes[i].value.last_dim();
                let mut d = vec![0.0; g.len()];
                for ((ds, gs), ys) in d.chunks_mut(n).zip(g.chunks(n)).zip(out.chunks(n)) {
                    let dot: f64 = gs.iter().zip(ys).map(|(g, y)| g * y).sum();
                    for ((dv, gv), yv) in ds.iter_mut().zip(gs).zip(ys) {
                        *dv = yv * (gv - dot);
                    }
                }
                accumulate(grads, a, &d);
            }
            &Op::ConcatLast(a, b) => {
                let na = self.nodes[a].value.last_dim();
                let nb = self.nodes[b].value.last_dim();
                let mut ga = Vec::with_capacity(self.data(a).len());
                let mut gb = Vec::with_capacity(self.data(b).len());
                for row in g.chunks(na + nb) {
                    ga.extend_from_slice(&row[..na]);
                    gb.extend_from_slice(&row[na..]);
                }
                self.acc_if(grads, a, &ga);
                self.acc_if(grads, b, &gb);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.data(p).len();
                    self.acc_if(grads, p, &g[offset..offset + len]);
                    offset += len;
                }
            }
            &Op::MeanAxis { input, axis } => {
                let (outer, extent, inner) = split_axis(self.shape(input), axis);
                let inv = 1.0 / extent as f64;
                let mut d = vec![0.0; outer * extent * inner];
                for o in 0..outer {
                    for k in 0..extent {
                        let base = (o * extent + k) * inner;
                        for j in 0..inner {
                            d[base + j] = g[o * inner + j] * inv;
                        }
                    }
                }
                accumulate(grads, input, &d);
            }
            &Op::Sum(a) => {
                let d = vec![g[0]; self.data(a).len()];
                accumulate(grads, a, &d);
            }
            &Op::Reshape(a) => accumulate(grads, a, g),
            Op::GatherRows { input, indices } => {
                let n = self.nodes[*input].value.last_dim();
                let mut d = vec![0.0; self.data(*input).len()];
                for (r, &src) in indices.iter().enumerate() {
                    for j in 0..n {
                        d[src * n + j] += g[r * n + j];
                    }
                }
                accumulate(grads, *input, &d);
            }
            Op::GatherLast { input, indices } => {
                let n = self.nodes[*input].value.last_dim();
                let k = indices.len();
                let mut d = vec![0.0; self.data(*input).len()];
                for (row, (dr, gr)) in d.chunks_mut(n).zip(g.chunks(k)).enumerate() {
                    let _ = row;
                    for (&c, &gv) in indices.iter().zip(gr) {
                        dr[c] += gv;
                    }
                }
                accumulate(grads, *input, &d);
            }
            Op::Mask { input, keep } => {
                let d: Vec<f64> = g
                    .iter()
                    .zip(keep)
                    .map(|(&g, &k)| if k { g } else { 0.0 })
                    .collect();
                accumulate(grads, *input, &d);
            }
            &Op::Renormalize(a) => {
                let x = self.data(a);
                let s: f64 = x.iter().sum();
                let gx: f64 = g.iter().zip(x).map(|(g, x)| g * x).sum::<f64>() / (s * s);
                let d: Vec<f64> = g.iter().map(|g| g / s - gx).collect();
                accumulate(grads, a, &d);
            }
            Op::CrossEntropy { logits, labels } => {
                let c = self.nodes[*logits].value.last_dim();
                let b = labels.len() as f64;
                let mut d = self.data(*logits).to_vec();
                for (row, &y) in d.chunks_mut(c).zip(labels) {
                    softmax_in_place(row);
                    row[y] -= 1.0;
                    row.iter_mut().for_each(|v| *v *= g[0] / b);
                }
                accumulate(grads, *logits, &d);
            }
            &Op::JsDivergence(p, q) => {
                let (pd, qd) = (self.data(p), self.data(q));
                if self.rg(p) {
                    accumulate(grads, p, &js_grad(pd, qd, g[0]));
                }
                if self.rg(q) {
                    accumulate(grads, q, &js_grad(qd, pd, g[0]));
                }
            }
        }
    }

    fn acc_if(&self, grads: &mut [Option<Vec<f64>>], i: usize, d: &[f64]) {
        if self.rg(i) {
            accumulate(grads, i, d);
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], i: usize, d: &[f64]) {
    match &mut grads[i] {
        Some(g) => g.iter_mut().zip(d).for_each(|(g, d)| *g += d),
        slot @ None => *slot = Some(d.to_vec()),
    }
}

fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in xs.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    xs.iter_mut().for_each(|v| *v /= total);
}

/// NaN entries pass so that upstream NaN reaches the loss instead of
/// surfacing as a domain error.
fn check_probability(p: &[f64], name: &str) -> Result<()> {
    if p.iter().any(|v| v.is_nan()) {
        return Ok(());
    }
    if let Some(v) = p.iter().find(|v| **v < 0.0) {
        return Err(TassError::Domain(format!("{name} has negative entry {v}")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > PROBABILITY_SUM_TOL {
        return Err(TassError::Domain(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

fn js_value(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            total += 0.5 * a * (a / m).ln();
        }
        if b > 0.0 {
            total += 0.5 * b * (b / m).ln();
        }
    }
    total
}

/// d JS / d p_i = ½ ln(p_i / m_i); zero where p_i = 0 (one-sided limit is −∞).
fn js_grad(p: &[f64], q: &[f64], upstream: f64) -> Vec<f64> {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            if a > 0.0 {
                upstream * 0.5 * (2.0 * a / (a + b)).ln()
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_dot() {
        let mut tape = Tape::new();
        let i2 = tape.leaf(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let m = tape.leaf(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let c = tape.matmul(i2, m).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);

        let a = tape.leaf(t(&[1, 2], &[1.0, 2.0]));
        let b = tape.leaf(t(&[2, 1], &[3.0, 4.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert_eq!(err.kind(), "dimension");
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![0.0; 4]));
        let y = tape.softmax(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.25; 4]);

        let x = tape.leaf(Tensor::row(vec![1000.0, 0.0]));
        let y = tape.softmax(x).unwrap();
        assert_eq!(tape.value(y).data()[0], 1.0);
        assert!(tape.value(y).data()[1] >= 0.0 && tape.value(y).data()[1] < 1e-300);

        let x = tape.leaf(Tensor::row(vec![1f64.ln(), 3f64.ln()]));
        let y = tape.softmax(x).unwrap();
        assert!((tape.value(y).data()[0] - 0.25).abs() < 1e-15);
        assert!((tape.value(y).data()[1] - 0.75).abs() < 1e-15);

        let s = tape.leaf(Tensor::scalar(1.0));
        assert!(matches!(tape.softmax(s), Err(TassError::Dimension { .. })));
    }

    #[test]
    fn elementwise_examples() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::row(vec![1.0, 2.0, 3.0]));
        let z = tape.leaf(Tensor::row(vec![0.0; 3]));
        let m = tape.mul(a, z).unwrap();
        assert_eq!(tape.value(m).data(), &[0.0; 3]);

        let x = tape.leaf(Tensor::row(vec![1.0, 2.0]));
        let y = tape.leaf(Tensor::row(vec![3.0]));
        let c = tape.concat_last(x, y).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0]);
        assert_eq!(tape.value(c).shape(), &[1, 3]);

        let m = tape.leaf(t(&[2, 2], &[1.0, 3.0, 5.0, 7.0]));
        let mean = tape.mean_axis(m, 0).unwrap();
        assert_eq!(tape.value(mean).data(), &[3.0, 5.0]);
        let mean1 = tape.mean_axis(m, 1).unwrap();
        assert_eq!(tape.value(mean1).data(), &[2.0, 6.0]);
    }

    #[test]
    fn no_implicit_broadcast() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[1, 3]));
        assert!(matches!(tape.add(a, b), Err(TassError::Dimension { .. })));
        assert!(matches!(tape.mul(a, b), Err(TassError::Dimension { .. })));
        let c = tape.leaf(Tensor::zeros(&[3, 3]));
        assert!(tape.concat_last(a, c).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let mut tape = Tape::new();
        let l = tape.leaf(Tensor::row(vec![0.0, 0.0]));
        let ce = tape.cross_entropy(l, &[0]).unwrap();
        assert!((tape.value(ce).item() - 2f64.ln()).abs() < 1e-15);

        let l = tape.leaf(Tensor::row(vec![10.0, -10.0]));
        let ce = tape.cross_entropy(l, &[0]).unwrap();
        // -ln σ(20) = ln(1 + e^-20)
        let expected = (-20f64).exp().ln_1p();
        assert!((tape.value(ce).item() - expected).abs() < 1e-6 * expected);
        assert!((tape.value(ce).item() - 2.06e-9).abs() < 1e-11);

        assert!(matches!(tape.cross_entropy(l, &[2]), Err(TassError::Index(_))));
    }

    #[test]
    fn js_examples_and_domain() {
        let mut tape = Tape::new();
        let p = tape.leaf(Tensor::row(vec![0.3, 0.7]));
        let js = tape.js_divergence(p, p).unwrap();
        assert!(tape.value(js).item().abs() < 1e-12);

        let p = tape.leaf(Tensor::row(vec![1.0, 0.0]));
        let q = tape.leaf(Tensor::row(vec![0.5, 0.5]));
        let js = tape.js_divergence(p, q).unwrap();
        // ½·ln(4/3) + ½·(0.5·ln(2/3) + 0.5·ln 2)
        let hand = 0.5 * (4.0f64 / 3.0).ln() + 0.25 * (2.0f64 / 3.0).ln() + 0.25 * 2f64.ln();
        assert!((tape.value(js).item() - hand).abs() < 1e-15);
        assert!((tape.value(js).item() - 0.2158).abs() < 1e-4);

        let bad = tape.leaf(Tensor::row(vec![-0.1, 1.1]));
        assert!(matches!(tape.js_divergence(bad, q), Err(TassError::Domain(_))));
        let bad = tape.leaf(Tensor::row(vec![0.5, 0.6]));
        assert!(matches!(tape.js_divergence(bad, q), Err(TassError::Domain(_))));
    }

    #[test]
    fn backward_linear_and_tanh() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::uniform(&[2, 3, 2], 1.0, &mut rand::rng()));
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0; 12]);

        let mut tape = Tape::new();
        let x = tape.param(Tensor::zeros(&[3]));
        let y = tape.tanh(x).unwrap();
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0; 3]);
    }

    #[test]
    fn backward_contract_errors() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::ones(&[2]));
        assert!(matches!(tape.backward(x), Err(TassError::Contract(_))));

        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert!(matches!(tape.backward(s), Err(TassError::StaleTape(_))));

        let mut other = Tape::new();
        assert!(matches!(other.backward(s), Err(TassError::StaleTape(_))));
    }

    #[test]
    fn threshold_gate_keeps_equal_entries() {
        let mut tape = Tape::new();
        let s = tape.param(Tensor::row(vec![0.3, 0.01, 0.025]));
        let g = tape.threshold_gate(s, 0.025).unwrap();
        assert_eq!(tape.value(g).data(), &[0.3, 0.0, 0.025]);
        let total = tape.sum(g).unwrap();
        tape.backward(total).unwrap();
        assert_eq!(tape.grad(s).unwrap().data(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn gathers_scatter_back() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let r = tape.gather_rows(x, &[2, 0, 2]).unwrap();
        assert_eq!(tape.value(r).data(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        let c = tape.gather_last(r, &[1]).unwrap();
        assert_eq!(tape.value(c).data(), &[6.0, 2.0, 6.0]);
        let s = tape.sum(c).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
    }
}
