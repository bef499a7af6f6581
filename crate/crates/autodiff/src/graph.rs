//! The operation tape and its backward rules.

use std::collections::{BTreeMap, HashMap};

use ktbench_core::KtRng;

use crate::error::{EngineError, Result};
use crate::kernels::{matmul, matmul_nt, matmul_tn};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Clip applied to probabilities inside the cross-entropy loss.
pub const BCE_CLIP: f64 = 1e-7;

/// Handle to a node recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var),
    MaskedSoftmax(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Transpose(Var),
    Gather(Var, Vec<usize>),
    SelectCols(Var, Vec<usize>),
    RepeatRows(Var, usize),
    TileRows(Var, usize),
    SumGroups(Var, usize),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    Dropout(Var, Tensor),
    MaskedBce { probs: Var, labels: Tensor, mask: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients keyed by parameter name, one entry per stored parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn from_map(grads: BTreeMap<String, Tensor>) -> Self {
        Self { grads }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.grads.iter()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.values().map(Tensor::squared_norm).sum::<f64>().sqrt()
    }
}

/// Records a forward computation for one backward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

fn dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &Tensor, mask: Option<&Tensor>) -> Tensor {
    let (r, c) = dims(x);
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = x.row(i);
        let keep = |j: usize| mask.is_none_or(|m| m.get(i, j) != 0.0);
        let max = (0..c).filter(|&j| keep(j)).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut total = 0.0;
        for j in (0..c).filter(|&j| keep(j)) {
            let e = (row[j] - max).exp();
            out[i * c + j] = e;
            total += e;
        }
        for v in &mut out[i * c..(i + 1) * c] {
            *v /= total;
        }
    }
    x.with_data(out)
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

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Constant => false,
            Op::Param => true,
            other => inputs(other).iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    /// Brings a stored parameter into the graph. Repeated calls with the
    /// same name return the same node, so gradients accumulate there.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store
            .get(name)
            .ok_or_else(|| EngineError::UnknownParam(name.to_string()))?
            .clone();
        let v = self.push(value, Op::Param);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = dims(self.value(a));
        let (k2, m) = dims(self.value(b));
        if k != k2 {
            return Err(EngineError::shape("matmul", self.shape(a), self.shape(b)));
        }
        let out = matmul(self.value(a).data(), self.value(b).data(), n, k, m);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::MatMul(a, b)))
    }

    fn zip_same(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return Err(EngineError::shape(op, ta.shape(), tb.shape()));
        }
        Ok(ta.with_data(ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect()))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    /// Adds a `1 x n` row to every row of an `r x n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = dims(self.value(a));
        if self.shape(row) != [1, c] {
            return Err(EngineError::shape("add_row", self.shape(a), self.shape(row)));
        }
        let (ta, tr) = (self.value(a), self.value(row));
        let mut out = ta.data().to_vec();
        for i in 0..r {
            for (o, &b) in out[i * c..(i + 1) * c].iter_mut().zip(tr.data()) {
                *o += b;
            }
        }
        let t = ta.with_data(out);
        Ok(self.push(t, Op::AddRow(a, row)))
    }

    /// `x * w + b` for an `r x k` input, `k x m` weight and `1 x m` bias.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    /// Multiplies every row `i` of an `r x n` matrix by entry `i` of an
    /// `r x 1` column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (r, c) = dims(self.value(a));
        if self.shape(col) != [r, 1] {
            return Err(EngineError::shape("mul_col", self.shape(a), self.shape(col)));
        }
        let (ta, tc) = (self.value(a), self.value(col));
        let mut out = ta.data().to_vec();
        for i in 0..r {
            let s = tc.data()[i];
            for o in &mut out[i * c..(i + 1) * c] {
                *o *= s;
            }
        }
        let t = ta.with_data(out);
        Ok(self.push(t, Op::MulCol(a, col)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let t = self.value(a).map(|x| x * k);
        self.push(t, Op::Scale(a, k))
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| 1.0 - x);
        self.push(t, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(stable_sigmoid);
        self.push(t, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::tanh);
        self.push(t, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.max(0.0));
        self.push(t, Op::Relu(a))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = softmax_rows(self.value(a), None);
        self.push(t, Op::Softmax(a))
    }

    /// Softmax over the last axis restricted to entries where `mask` is
    /// non-zero; masked entries come out exactly 0. A fully masked row is
    /// all zeros.
    pub fn masked_softmax(&mut self, a: Var, mask: &Tensor) -> Result<Var> {
        if !self.value(a).same_shape(mask) {
            return Err(EngineError::shape("masked_softmax", self.shape(a), mask.shape()));
        }
        if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(EngineError::Contract("masked_softmax mask must be binary".into()));
        }
        let t = softmax_rows(self.value(a), Some(mask));
        Ok(self.push(t, Op::MaskedSoftmax(a)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| EngineError::Contract("concat_cols of nothing".into()))?;
        let r = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != r {
                return Err(EngineError::shape("concat_cols", self.shape(first), self.shape(p)));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        Ok(self.push(Tensor::matrix(r, total, out)?, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| EngineError::Contract("concat_rows of nothing".into()))?;
        let c = self.value(first).cols();
        for &p in parts {
            if self.value(p).cols() != c {
                return Err(EngineError::shape("concat_rows", self.shape(first), self.shape(p)));
            }
        }
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let rows = out.len() / c;
        Ok(self.push(Tensor::matrix(rows, c, out)?, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = dims(self.value(a));
        if len == 0 || start + len > r {
            return Err(EngineError::shape("slice_rows", self.shape(a), &[start, len]));
        }
        let out = self.value(a).data()[start * c..(start + len) * c].to_vec();
        Ok(self.push(Tensor::matrix(len, c, out)?, Op::SliceRows(a, start)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = dims(self.value(a));
        if len == 0 || start + len > c {
            return Err(EngineError::shape("slice_cols", self.shape(a), &[start, len]));
        }
        let ta = self.value(a);
        let out: Vec<f64> = (0..r).flat_map(|i| ta.row(i)[start..start + len].to_vec()).collect();
        Ok(self.push(Tensor::matrix(r, len, out)?, Op::SliceCols(a, start)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = dims(self.value(a));
        let ta = self.value(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = ta.data()[i * c + j];
            }
        }
        let t = Tensor::matrix(c, r, out).expect("transpose keeps size");
        self.push(t, Op::Transpose(a))
    }

    /// Row lookup: output row `i` is row `indices[i]` of `table`.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (r, c) = dims(self.value(table));
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(EngineError::shape("gather", self.shape(table), &[bad]));
        }
        if indices.is_empty() {
            return Err(EngineError::Contract("gather with no indices".into()));
        }
        let tt = self.value(table);
        let out: Vec<f64> = indices.iter().flat_map(|&i| tt.row(i).to_vec()).collect();
        Ok(self.push(Tensor::matrix(indices.len(), c, out)?, Op::Gather(table, indices.to_vec())))
    }

    /// Picks entry `(i, cols[i])` from each row, giving an `r x 1` column.
    pub fn select_cols(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let (r, c) = dims(self.value(a));
        if cols.len() != r {
            return Err(EngineError::shape("select_cols", self.shape(a), &[cols.len()]));
        }
        if let Some(&bad) = cols.iter().find(|&&j| j >= c) {
            return Err(EngineError::shape("select_cols", self.shape(a), &[bad]));
        }
        let ta = self.value(a);
        let out: Vec<f64> = cols.iter().enumerate().map(|(i, &j)| ta.get(i, j)).collect();
        Ok(self.push(Tensor::matrix(r, 1, out)?, Op::SelectCols(a, cols.to_vec())))
    }

    /// `r x n` -> `(r * times) x n`, each row repeated `times` times in place.
    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Result<Var> {
        if times == 0 {
            return Err(EngineError::Contract("repeat_rows by 0".into()));
        }
        let (r, c) = dims(self.value(a));
        let ta = self.value(a);
        let mut out = Vec::with_capacity(r * times * c);
        for i in 0..r {
            for _ in 0..times {
                out.extend_from_slice(ta.row(i));
            }
        }
        Ok(self.push(Tensor::matrix(r * times, c, out)?, Op::RepeatRows(a, times)))
    }

    /// `r x n` -> `(times * r) x n`, the whole block stacked `times` times.
    pub fn tile_rows(&mut self, a: Var, times: usize) -> Result<Var> {
        if times == 0 {
            return Err(EngineError::Contract("tile_rows by 0".into()));
        }
        let (r, c) = dims(self.value(a));
        let out = self.value(a).data().repeat(times);
        Ok(self.push(Tensor::matrix(r * times, c, out)?, Op::TileRows(a, times)))
    }

    /// `(g * size) x n` -> `g x n`, summing consecutive groups of `size` rows.
    pub fn sum_groups(&mut self, a: Var, size: usize) -> Result<Var> {
        let (r, c) = dims(self.value(a));
        if size == 0 || r % size != 0 {
            return Err(EngineError::shape("sum_groups", self.shape(a), &[size]));
        }
        let groups = r / size;
        let ta = self.value(a);
        let mut out = vec![0.0; groups * c];
        for i in 0..r {
            let g = i / size;
            for (o, &v) in out[g * c..(g + 1) * c].iter_mut().zip(ta.row(i)) {
                *o += v;
            }
        }
        Ok(self.push(Tensor::matrix(groups, c, out)?, Op::SumGroups(a, size)))
    }

    /// Reinterprets the row-major values with a new `rows x cols` shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        if rows * cols != self.value(a).len() {
            return Err(EngineError::shape("reshape", self.shape(a), &[rows, cols]));
        }
        let t = Tensor::matrix(rows, cols, self.value(a).data().to_vec())?;
        Ok(self.push(t, Op::Reshape(a)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Inverted dropout: in training each element is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`;
    /// otherwise the input is passed through unchanged.
    pub fn dropout(&mut self, a: Var, rate: f64, training: bool, rng: &mut KtRng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(EngineError::Contract(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let (r, c) = dims(self.value(a));
        let mask_data: Vec<f64> = (0..r * c)
            .map(|_| if rng.bernoulli(rate) { 0.0 } else { keep })
            .collect();
        let mask = Tensor::matrix(r, c, mask_data)?;
        let t = self.zip_with_tensor(a, &mask);
        Ok(self.push(t, Op::Dropout(a, mask)))
    }

    fn zip_with_tensor(&self, a: Var, m: &Tensor) -> Tensor {
        let ta = self.value(a);
        ta.with_data(ta.data().iter().zip(m.data()).map(|(x, y)| x * y).collect())
    }

    /// Mean binary cross-entropy over entries where `mask` is 1:
    /// `sum(mask * -(c ln p + (1 - c) ln(1 - p))) / sum(mask)`, with `p`
    /// clipped to `[1e-7, 1 - 1e-7]`. Masked entries contribute nothing to
    /// the value or the gradient.
    pub fn bce_masked(&mut self, probs: Var, labels: &Tensor, mask: &Tensor) -> Result<Var> {
        let tp = self.value(probs);
        if !tp.same_shape(labels) || !tp.same_shape(mask) {
            return Err(EngineError::shape("bce_masked", tp.shape(), labels.shape()));
        }
        let count: f64 = mask.data().iter().sum();
        if count <= 0.0 {
            return Err(EngineError::Contract("bce_masked with an all-zero mask".into()));
        }
        let mut total = 0.0;
        for ((&p, &c), &m) in tp.data().iter().zip(labels.data()).zip(mask.data()) {
            if m != 0.0 {
                let p = p.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
                total -= m * (c * p.ln() + (1.0 - c) * (1.0 - p).ln());
            }
        }
        let op = Op::MaskedBce {
            probs,
            labels: labels.clone(),
            mask: mask.clone(),
        };
        Ok(self.push(Tensor::scalar(total / count), op))
    }

    /// Reverse pass from a scalar `loss`. Returns one gradient per parameter
    /// in `store`; parameters the loss does not depend on get zeros.
    pub fn backward(&self, loss: Var, store: &ParamStore) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(EngineError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        if !lv.is_finite() {
            return Err(EngineError::Contract("loss is not finite".into()));
        }

        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if let Op::Param = node.op {
                grads[idx] = Some(g);
                continue;
            }
            for (input, contribution) in self.local_grads(node, &g) {
                if !self.nodes[input.0].needs_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(existing) => existing.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }

        let mut out = BTreeMap::new();
        for (name, value) in store.iter() {
            let g = self
                .params
                .get(name)
                .and_then(|v| grads.get(v.0).and_then(|g| g.clone()))
                .unwrap_or_else(|| Tensor::zeros(value.rows(), value.cols()));
            out.insert(name.clone(), g);
        }
        Ok(Gradients { grads: out })
    }

    /// Gradient contributions of `node` to its inputs given its output
    /// gradient `g`.
    fn local_grads(&self, node: &Node, g: &Tensor) -> Vec<(Var, Tensor)> {
        let y = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Constant | Op::Param => vec![],
            Op::MatMul(a, b) => {
                let (n, k) = dims(val(*a));
                let m = val(*b).cols();
                let mut out = Vec::with_capacity(2);
                if needs(*a) {
                    let da = matmul_nt(g.data(), val(*b).data(), n, m, k);
                    out.push((*a, val(*a).with_data(da)));
                }
                if needs(*b) {
                    let db = matmul_tn(val(*a).data(), g.data(), n, k, m);
                    out.push((*b, val(*b).with_data(db)));
                }
                out
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|x| -x))],
            Op::Mul(a, b) => {
                let da = g.with_data(g.data().iter().zip(val(*b).data()).map(|(x, y)| x * y).collect());
                let db = g.with_data(g.data().iter().zip(val(*a).data()).map(|(x, y)| x * y).collect());
                vec![(*a, da), (*b, db)]
            }
            Op::AddRow(a, row) => {
                let (r, c) = dims(g);
                let mut dr = vec![0.0; c];
                for i in 0..r {
                    for (d, &v) in dr.iter_mut().zip(g.row(i)) {
                        *d += v;
                    }
                }
                vec![(*a, g.clone()), (*row, val(*row).with_data(dr))]
            }
            Op::MulCol(a, col) => {
                let (r, c) = dims(g);
                let ta = val(*a);
                let tc = val(*col);
                let mut da = g.data().to_vec();
                let mut dc = vec![0.0; r];
                for i in 0..r {
                    let s = tc.data()[i];
                    for j in 0..c {
                        dc[i] += g.data()[i * c + j] * ta.data()[i * c + j];
                        da[i * c + j] *= s;
                    }
                }
                vec![(*a, ta.with_data(da)), (*col, tc.with_data(dc))]
            }
            Op::Scale(a, k) => vec![(*a, g.map(|x| x * k))],
            Op::OneMinus(a) => vec![(*a, g.map(|x| -x))],
            Op::Sigmoid(a) => vec![(
                *a,
                g.with_data(g.data().iter().zip(y.data()).map(|(d, s)| d * s * (1.0 - s)).collect()),
            )],
            Op::Tanh(a) => vec![(
                *a,
                g.with_data(g.data().iter().zip(y.data()).map(|(d, t)| d * (1.0 - t * t)).collect()),
            )],
            Op::Relu(a) => vec![(
                *a,
                g.with_data(
                    g.data()
                        .iter()
                        .zip(val(*a).data())
                        .map(|(d, &x)| if x > 0.0 { *d } else { 0.0 })
                        .collect(),
                ),
            )],
            Op::Softmax(a) | Op::MaskedSoftmax(a) => {
                let (r, c) = dims(y);
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    let yr = y.row(i);
                    let gr = g.row(i);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        dx[i * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                vec![(*a, y.with_data(dx))]
            }
            Op::ConcatCols(parts) => {
                let r = g.rows();
                let mut offset = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let pc = val(p).cols();
                        let d: Vec<f64> = (0..r).flat_map(|i| g.row(i)[offset..offset + pc].to_vec()).collect();
                        offset += pc;
                        (p, val(p).with_data(d))
                    })
                    .collect()
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let n = val(p).len();
                        let d = g.data()[offset..offset + n].to_vec();
                        offset += n;
                        (p, val(p).with_data(d))
                    })
                    .collect()
            }
            Op::SliceRows(a, start) => {
                let ta = val(*a);
                let c = ta.cols();
                let mut d = vec![0.0; ta.len()];
                d[start * c..start * c + g.len()].copy_from_slice(g.data());
                vec![(*a, ta.with_data(d))]
            }
            Op::SliceCols(a, start) => {
                let ta = val(*a);
                let (r, c) = dims(ta);
                let len = g.cols();
                let mut d = vec![0.0; ta.len()];
                for i in 0..r {
                    d[i * c + start..i * c + start + len].copy_from_slice(g.row(i));
                }
                vec![(*a, ta.with_data(d))]
            }
            Op::Transpose(a) => {
                let (r, c) = dims(g);
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        d[j * r + i] = g.data()[i * c + j];
                    }
                }
                vec![(*a, val(*a).with_data(d))]
            }
            Op::Gather(table, indices) => {
                let tt = val(*table);
                let c = tt.cols();
                let mut d = vec![0.0; tt.len()];
                for (i, &src) in indices.iter().enumerate() {
                    for (o, &v) in d[src * c..(src + 1) * c].iter_mut().zip(g.row(i)) {
                        *o += v;
                    }
                }
                vec![(*table, tt.with_data(d))]
            }
            Op::SelectCols(a, cols) => {
                let ta = val(*a);
                let c = ta.cols();
                let mut d = vec![0.0; ta.len()];
                for (i, &j) in cols.iter().enumerate() {
                    d[i * c + j] = g.data()[i];
                }
                vec![(*a, ta.with_data(d))]
            }
            Op::RepeatRows(a, times) => {
                let ta = val(*a);
                let c = ta.cols();
                let mut d = vec![0.0; ta.len()];
                for i in 0..g.rows() {
                    let src = i / times;
                    for (o, &v) in d[src * c..(src + 1) * c].iter_mut().zip(g.row(i)) {
                        *o += v;
                    }
                }
                vec![(*a, ta.with_data(d))]
            }
            Op::TileRows(a, times) => {
                let ta = val(*a);
                let n = ta.len();
                let mut d = vec![0.0; n];
                for t in 0..*times {
                    for (o, &v) in d.iter_mut().zip(&g.data()[t * n..(t + 1) * n]) {
                        *o += v;
                    }
                }
                vec![(*a, ta.with_data(d))]
            }
            Op::SumGroups(a, size) => {
                let ta = val(*a);
                let c = ta.cols();
                let d: Vec<f64> = (0..ta.rows()).flat_map(|i| g.row(i / size).to_vec()).collect();
                debug_assert_eq!(d.len(), c * ta.rows());
                vec![(*a, ta.with_data(d))]
            }
            Op::Reshape(a) => vec![(*a, val(*a).with_data(g.data().to_vec()))],
            Op::Sum(a) => {
                let s = g.data()[0];
                vec![(*a, val(*a).map(|_| s))]
            }
            Op::Mean(a) => {
                let s = g.data()[0] / val(*a).len() as f64;
                vec![(*a, val(*a).map(|_| s))]
            }
            Op::Dropout(a, mask) => vec![(
                *a,
                g.with_data(g.data().iter().zip(mask.data()).map(|(x, m)| x * m).collect()),
            )],
            Op::MaskedBce { probs, labels, mask } => {
                let tp = val(*probs);
                let count: f64 = mask.data().iter().sum();
                let s = g.data()[0] / count;
                let d: Vec<f64> = tp
                    .data()
                    .iter()
                    .zip(labels.data())
                    .zip(mask.data())
                    .map(|((&p, &c), &m)| {
                        if m == 0.0 || !(BCE_CLIP..=1.0 - BCE_CLIP).contains(&p) {
                            0.0
                        } else {
                            s * m * (-c / p + (1.0 - c) / (1.0 - p))
                        }
                    })
                    .collect();
                vec![(*probs, tp.with_data(d))]
            }
        }
    }
}

fn inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Constant | Op::Param => vec![],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MulCol(a, b) => {
            vec![*a, *b]
        }
        Op::ConcatCols(parts) | Op::ConcatRows(parts) => parts.clone(),
        Op::Scale(a, _)
        | Op::OneMinus(a)
        | Op::Sigmoid(a)
        | Op::Tanh(a)
        | Op::Relu(a)
        | Op::Softmax(a)
        | Op::MaskedSoftmax(a)
        | Op::SliceRows(a, _)
        | Op::SliceCols(a, _)
        | Op::Transpose(a)
        | Op::Gather(a, _)
        | Op::SelectCols(a, _)
        | Op::RepeatRows(a, _)
        | Op::TileRows(a, _)
        | Op::SumGroups(a, _)
        | Op::Reshape(a)
        | Op::Sum(a)
        | Op::Mean(a)
        | Op::Dropout(a, _) => vec![*a],
        Op::MaskedBce { probs, .. } => vec![*probs],
    }
}
