//! Dynamic reverse-mode tape.
//!
//! A [`Graph`] is rebuilt for every forward pass. Each operation appends a
//! node holding its forward value and whatever it needs for the backward
//! sweep; inputs always precede outputs, so node order is a topological order
//! and [`Graph::backward`] simply walks it in reverse.

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Clamp applied to probabilities fed into binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddScalar(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Row(Var, usize),
    Stack(Vec<Var>),
    ScaleRows(Var, Var),
    MeanRows(Var),
    Reshape(Var),
    Sum(Var),
    AddN(Vec<Var>),
    Dot(Var, Var),
    CrossEntropy {
        logits: Var,
        probs: Vec<f64>,
        target: usize,
    },
    Bce {
        p: Var,
        label: f64,
        active: bool,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that required one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adds the gradient of every bound parameter into the store. Parameters
    /// bound several times receive the sum.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for &(id, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                store.accumulate(id, g.data());
            }
        }
    }
}

fn vec_len(shape: &[usize]) -> Option<usize> {
    match shape {
        [n] => Some(*n),
        _ => None,
    }
}

/// Gradient buffer of `v`, allocated on first use; None when `v` needs none.
fn grad_slot<'a>(
    nodes: &[Node],
    grads: &'a mut [Option<Vec<f64>>],
    v: Var,
) -> Option<&'a mut Vec<f64>> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    let len = node.value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(
        &mut self,
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        kind: Op,
    ) -> Result<Var> {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { op });
        }
        let requires_grad = match &kind {
            Op::Leaf | Op::Param(_) => unreachable!("leaves are pushed directly"),
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddScalar(a, b)
            | Op::ScaleRows(a, b)
            | Op::Dot(a, b) => self.needs(*a) || self.needs(*b),
            Op::Concat(vs) | Op::Stack(vs) | Op::AddN(vs) => vs.iter().any(|v| self.needs(*v)),
            Op::Scale(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Softmax(a)
            | Op::Slice(a, _)
            | Op::Row(a, _)
            | Op::MeanRows(a)
            | Op::Reshape(a)
            | Op::Sum(a) => self.needs(*a),
            Op::CrossEntropy { logits, .. } => self.needs(*logits),
            Op::Bce { p, .. } => self.needs(*p),
        };
        self.nodes.push(Node {
            value: Tensor::from_parts(shape, data),
            op: kind,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn leaf(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, Op::Leaf, false)
    }

    /// A non-parameter input whose gradient is wanted (e.g. raw features).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.leaf(value, Op::Leaf, true)
    }

    /// Binds a stored parameter; frozen parameters behave as constants.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.leaf(p.value.clone(), Op::Param(id), !p.frozen)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    /// Matrix product. A rank-1 left operand is treated as a single row and
    /// yields a rank-1 result.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let mismatch = || Error::Dimension {
            op: "matmul",
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        };
        let (m, n, row_vector) = match *self.shape(a) {
            [n] => (1, n, true),
            [m, n] => (m, n, false),
            _ => return Err(mismatch()),
        };
        let p = match *self.shape(b) {
            [bn, p] if bn == n => p,
            _ => return Err(mismatch()),
        };
        let (ad, bd) = (self.data(a), self.data(b));
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            let orow = &mut out[i * p..(i + 1) * p];
            for k in 0..n {
                let aik = ad[i * n + k];
                if aik == 0.0 {
                    continue;
                }
                for (o, bv) in orow.iter_mut().zip(&bd[k * p..(k + 1) * p]) {
                    *o += aik * bv;
                }
            }
        }
        let shape = if row_vector { vec![p] } else { vec![m, p] };
        self.push("matmul", shape, out, Op::MatMul(a, b))
    }

    fn zip_with(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        kind: Op,
    ) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(op, shape, out, kind)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a one-element tensor to every entry of `a`.
    pub fn add_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::Dimension {
                op: "add_scalar",
                left: self.shape(a).to_vec(),
                right: self.shape(s).to_vec(),
            });
        }
        let sv = self.data(s)[0];
        let out = self.data(a).iter().map(|x| x + sv).collect();
        let shape = self.shape(a).to_vec();
        self.push("add_scalar", shape, out, Op::AddScalar(a, s))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let out = self.data(a).iter().map(|x| x * factor).collect();
        let shape = self.shape(a).to_vec();
        self.push("scale", shape, out, Op::Scale(a, factor))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.data(a).iter().map(|&x| sigmoid(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push("sigmoid", shape, out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.data(a).iter().map(|x| x.tanh()).collect();
        let shape = self.shape(a).to_vec();
        self.push("tanh", shape, out, Op::Tanh(a))
    }

    /// Softmax of a vector, computed with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let n = vec_len(self.shape(a)).ok_or_else(|| {
            Error::Domain(format!("softmax expects a vector, got {:?}", self.shape(a)))
        })?;
        let mut out = self.data(a).to_vec();
        softmax_in_place(&mut out);
        self.push("softmax", vec![n], out, Op::Softmax(a))
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Domain("concat of no parts".into()));
        }
        let mut out = Vec::new();
        for &p in parts {
            if vec_len(self.shape(p)).is_none() {
                return Err(Error::Dimension {
                    op: "concat",
                    left: self.shape(parts[0]).to_vec(),
                    right: self.shape(p).to_vec(),
                });
            }
            out.extend_from_slice(self.data(p));
        }
        let n = out.len();
        self.push("concat", vec![n], out, Op::Concat(parts.to_vec()))
    }

    /// Contiguous sub-vector `[start, start + len)`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let n = vec_len(self.shape(a)).ok_or_else(|| {
            Error::Domain(format!("slice expects a vector, got {:?}", self.shape(a)))
        })?;
        if len == 0 || start + len > n {
            return Err(Error::Index {
                index: start + len,
                bound: n,
            });
        }
        let out = self.data(a)[start..start + len].to_vec();
        self.push("slice", vec![len], out, Op::Slice(a, start))
    }

    /// Row `index` of a matrix as a vector; also serves as embedding lookup.
    pub fn row(&mut self, a: Var, index: usize) -> Result<Var> {
        let (rows, cols) = self.value(a).dims2().ok_or_else(|| {
            Error::Domain(format!("row expects a matrix, got {:?}", self.shape(a)))
        })?;
        if index >= rows {
            return Err(Error::Index { index, bound: rows });
        }
        let out = self.value(a).row(index).to_vec();
        self.push("row", vec![cols], out, Op::Row(a, index))
    }

    /// Stacks equally sized vectors into a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let first = *rows
            .first()
            .ok_or_else(|| Error::Domain("stack of no rows".into()))?;
        let cols = vec_len(self.shape(first)).ok_or_else(|| {
            Error::Domain(format!(
                "stack expects vectors, got {:?}",
                self.shape(first)
            ))
        })?;
        let mut out = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            if self.shape(r) != [cols] {
                return Err(Error::Dimension {
                    op: "stack",
                    left: vec![cols],
                    right: self.shape(r).to_vec(),
                });
            }
            out.extend_from_slice(self.data(r));
        }
        self.push(
            "stack",
            vec![rows.len(), cols],
            out,
            Op::Stack(rows.to_vec()),
        )
    }

    /// Multiplies row `i` of matrix `m` by `weights[i]`.
    pub fn scale_rows(&mut self, m: Var, weights: Var) -> Result<Var> {
        let (rows, cols) = self.value(m).dims2().ok_or_else(|| Error::Dimension {
            op: "scale_rows",
            left: self.shape(m).to_vec(),
            right: self.shape(weights).to_vec(),
        })?;
        if self.shape(weights) != [rows] {
            return Err(Error::Dimension {
                op: "scale_rows",
                left: self.shape(m).to_vec(),
                right: self.shape(weights).to_vec(),
            });
        }
        let (md, wd) = (self.data(m), self.data(weights));
        let out = md
            .iter()
            .enumerate()
            .map(|(i, x)| x * wd[i / cols])
            .collect();
        self.push(
            "scale_rows",
            vec![rows, cols],
            out,
            Op::ScaleRows(m, weights),
        )
    }

    /// Column-wise mean of a matrix.
    pub fn mean_rows(&mut self, m: Var) -> Result<Var> {
        let (rows, cols) = self.value(m).dims2().ok_or_else(|| {
            Error::Domain(format!(
                "mean_rows expects a matrix, got {:?}",
                self.shape(m)
            ))
        })?;
        let md = self.data(m);
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            for (o, x) in out.iter_mut().zip(&md[r * cols..(r + 1) * cols]) {
                *o += x;
            }
        }
        out.iter_mut().for_each(|o| *o /= rows as f64);
        self.push("mean_rows", vec![cols], out, Op::MeanRows(m))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(Error::Dimension {
                op: "reshape",
                left: self.shape(a).to_vec(),
                right: shape,
            });
        }
        let out = self.data(a).to_vec();
        self.push("reshape", shape, out, Op::Reshape(a))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.data(a).iter().sum();
        self.push("sum", vec![], vec![s], Op::Sum(a))
    }

    /// Elementwise sum of equally shaped tensors.
    pub fn add_n(&mut self, terms: &[Var]) -> Result<Var> {
        let first = *terms
            .first()
            .ok_or_else(|| Error::Domain("add_n of no terms".into()))?;
        let mut out = self.data(first).to_vec();
        for &t in &terms[1..] {
            self.same_shape("add_n", first, t)?;
            for (o, x) in out.iter_mut().zip(self.data(t)) {
                *o += x;
            }
        }
        let shape = self.shape(first).to_vec();
        self.push("add_n", shape, out, Op::AddN(terms.to_vec()))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("dot", a, b)?;
        let s = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x * y)
            .sum();
        self.push("dot", vec![], vec![s], Op::Dot(a, b))
    }

    /// `-log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let n = vec_len(self.shape(logits)).ok_or_else(|| {
            Error::Domain(format!(
                "cross_entropy expects a vector, got {:?}",
                self.shape(logits)
            ))
        })?;
        if target >= n {
            return Err(Error::Index {
                index: target,
                bound: n,
            });
        }
        let ld = self.data(logits);
        let max = ld.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_total = ld.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let loss = log_total - (ld[target] - max);
        let mut probs = ld.to_vec();
        softmax_in_place(&mut probs);
        self.push(
            "cross_entropy",
            vec![],
            vec![loss.max(0.0)],
            Op::CrossEntropy {
                logits,
                probs,
                target,
            },
        )
    }

    /// Binary cross-entropy of a probability against a 0/1 label, with the
    /// probability clamped to `[BCE_EPS, 1 - BCE_EPS]`.
    pub fn bce(&mut self, p: Var, label: f64) -> Result<Var> {
        if self.value(p).len() != 1 {
            return Err(Error::Domain(format!(
                "bce expects a scalar, got {:?}",
                self.shape(p)
            )));
        }
        let raw = self.data(p)[0];
        let clamped = raw.clamp(BCE_EPS, 1.0 - BCE_EPS);
        let active = clamped == raw;
        let loss = -(label * clamped.ln() + (1.0 - label) * (1.0 - clamped).ln());
        self.push("bce", vec![], vec![loss], Op::Bce { p, label, active })
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Domain(format!(
                "backward needs a scalar loss, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        if self.needs(loss) {
            grads[loss.0] = Some(vec![1.0]);
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        let params = self
            .nodes
            .iter()
            .enumerate()
            .take(loss.0 + 1)
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((id, i)),
                _ => None,
            })
            .collect();
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.map(|g| Tensor::from_parts(self.nodes[i].value.shape().to_vec(), g)))
            .collect();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        macro_rules! slot {
            ($v:expr) => {
                grad_slot(&self.nodes, grads, $v)
            };
        }
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                let bshape = self.shape(*b);
                let (n, p) = (bshape[0], bshape[1]);
                let m = ad.len() / n;
                if let Some(da) = slot!(*a) {
                    for r in 0..m {
                        let grow = &g[r * p..(r + 1) * p];
                        for k in 0..n {
                            let brow = &bd[k * p..(k + 1) * p];
                            da[r * n + k] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if let Some(db) = slot!(*b) {
                    for r in 0..m {
                        let grow = &g[r * p..(r + 1) * p];
                        for k in 0..n {
                            let aik = ad[r * n + k];
                            if aik == 0.0 {
                                continue;
                            }
                            for (d, gv) in db[k * p..(k + 1) * p].iter_mut().zip(grow) {
                                *d += aik * gv;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(d) = slot!(v) {
                        d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(d) = slot!(*a) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
                if let Some(d) = slot!(*b) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d -= g);
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                if let Some(d) = slot!(*a) {
                    for ((d, g), x) in d.iter_mut().zip(g).zip(bd) {
                        *d += g * x;
                    }
                }
                if let Some(d) = slot!(*b) {
                    for ((d, g), x) in d.iter_mut().zip(g).zip(ad) {
                        *d += g * x;
                    }
                }
            }
            Op::AddScalar(a, s) => {
                if let Some(d) = slot!(*a) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
                if let Some(d) = slot!(*s) {
                    d[0] += g.iter().sum::<f64>();
                }
            }
            Op::Scale(a, factor) => {
                if let Some(d) = slot!(*a) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g * factor);
                }
            }
            Op::Sigmoid(a) => {
                if let Some(d) = slot!(*a) {
                    for ((d, g), y) in d.iter_mut().zip(g).zip(y) {
                        *d += g * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(d) = slot!(*a) {
                    for ((d, g), y) in d.iter_mut().zip(g).zip(y) {
                        *d += g * (1.0 - y * y);
                    }
                }
            }
            Op::Softmax(a) => {
                if let Some(d) = slot!(*a) {
                    let gy: f64 = g.iter().zip(y).map(|(g, y)| g * y).sum();
                    for ((d, g), y) in d.iter_mut().zip(g).zip(y) {
                        *d += y * (g - gy);
                    }
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    if let Some(d) = slot!(p) {
                        d.iter_mut()
                            .zip(&g[offset..offset + len])
                            .for_each(|(d, g)| *d += g);
                    }
                    offset += len;
                }
            }
            Op::Slice(a, start) => {
                if let Some(d) = slot!(*a) {
                    d[*start..*start + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(d, g)| *d += g);
                }
            }
            Op::Row(a, index) => {
                let cols = g.len();
                if let Some(d) = slot!(*a) {
                    d[index * cols..(index + 1) * cols]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(d, g)| *d += g);
                }
            }
            Op::Stack(rows) => {
                let cols = g.len() / rows.len();
                for (r, &v) in rows.iter().enumerate() {
                    if let Some(d) = slot!(v) {
                        d.iter_mut()
                            .zip(&g[r * cols..(r + 1) * cols])
                            .for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::ScaleRows(m, w) => {
                let (md, wd) = (self.data(*m), self.data(*w));
                let cols = md.len() / wd.len();
                if let Some(d) = slot!(*m) {
                    for (j, (d, g)) in d.iter_mut().zip(g).enumerate() {
                        *d += g * wd[j / cols];
                    }
                }
                if let Some(d) = slot!(*w) {
                    for (j, (g, x)) in g.iter().zip(md).enumerate() {
                        d[j / cols] += g * x;
                    }
                }
            }
            Op::MeanRows(m) => {
                let cols = g.len();
                let rows = self.value(*m).len() / cols;
                if let Some(d) = slot!(*m) {
                    for (j, d) in d.iter_mut().enumerate() {
                        *d += g[j % cols] / rows as f64;
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(d) = slot!(*a) {
                    d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                }
            }
            Op::Sum(a) => {
                if let Some(d) = slot!(*a) {
                    d.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::AddN(terms) => {
                for &t in terms {
                    if let Some(d) = slot!(t) {
                        d.iter_mut().zip(g).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Dot(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                if let Some(d) = slot!(*a) {
                    d.iter_mut().zip(bd).for_each(|(d, x)| *d += g[0] * x);
                }
                if let Some(d) = slot!(*b) {
                    d.iter_mut().zip(ad).for_each(|(d, x)| *d += g[0] * x);
                }
            }
            Op::CrossEntropy {
                logits,
                probs,
                target,
            } => {
                if let Some(d) = slot!(*logits) {
                    for (j, (d, p)) in d.iter_mut().zip(probs).enumerate() {
                        let onehot = if j == *target { 1.0 } else { 0.0 };
                        *d += g[0] * (p - onehot);
                    }
                }
            }
            Op::Bce { p, label, active } => {
                if !*active {
                    return;
                }
                let pv = self.data(*p)[0];
                if let Some(d) = slot!(*p) {
                    d[0] += g[0] * (-label / pv + (1.0 - label) / (1.0 - pv));
                }
            }
        }
    }
}
