use std::collections::BTreeMap;

use crate::numerics::store::ParameterStore;
use crate::numerics::tensor::{matmul, transpose, Tensor};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Val(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { param: Option<String> },
    Add(Val, Val),
    AddRow(Val, Val),
    Sub(Val, Val),
    Mul(Val, Val),
    MulCol(Val, Val),
    Scale(Val, f64),
    Matmul(Val, Val),
    Transpose(Val),
    Tanh(Val),
    Sigmoid(Val),
    Relu(Val),
    Sqrt(Val),
    SoftmaxRows(Val),
    SumAll(Val),
    MeanAll(Val),
    SumCols(Val),
    ConcatCols(Vec<Val>),
    ConcatRows(Vec<Val>),
    GatherRows(Val, Vec<usize>),
    ScatterRows(Val, Vec<usize>, usize),
    SliceCols(Val, usize, usize),
    Reshape(Val),
    MaxPoolRows(Val),
    CrossEntropyRow(Val, usize),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Record-on-forward, replay-on-backward reverse-mode tape.
///
/// One tape covers one forward pass; `backward` may be invoked once per tape.
/// Parameter leaves are cached by name so reusing a parameter in several
/// places accumulates into a single gradient.
pub struct Tape {
    nodes: Vec<Node>,
    param_leaves: BTreeMap<String, Val>,
    backward_done: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            param_leaves: BTreeMap::new(),
            backward_done: false,
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Val {
        self.nodes.push(Node { value, op });
        Val(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Val) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `[1,1]` node.
    pub fn scalar_value(&self, v: Val) -> f64 {
        let t = self.value(v);
        assert!(t.is_scalar(), "scalar_value on non-scalar node");
        t.data()[0]
    }

    pub fn constant(&mut self, t: Tensor) -> Val {
        self.push(t, Op::Leaf { param: None })
    }

    pub fn scalar(&mut self, v: f64) -> Val {
        self.constant(Tensor::scalar(v))
    }

    /// Leaf bound to a named parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<Val> {
        if let Some(v) = self.param_leaves.get(name) {
            return Ok(*v);
        }
        let value = store.get(name)?.clone();
        let v = self.push(
            value,
            Op::Leaf {
                param: Some(name.to_string()),
            },
        );
        self.param_leaves.insert(name.to_string(), v);
        Ok(v)
    }

    fn check_same_shape(&self, op: &str, a: Val, b: Val) {
        assert_eq!(
            self.value(a).shape(),
            self.value(b).shape(),
            "{op}: operand shapes differ ({:?} vs {:?})",
            self.value(a).shape(),
            self.value(b).shape()
        );
    }

    pub fn add(&mut self, a: Val, b: Val) -> Val {
        self.check_same_shape("add", a, b);
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_vec(shape, data).unwrap(), Op::Add(a, b))
    }

    /// `a [m×n] + bias [1×n]`, broadcast over rows.
    pub fn add_row(&mut self, a: Val, bias: Val) -> Val {
        let (m, n) = (self.value(a).rows(), self.value(a).cols());
        assert_eq!(
            self.value(bias).numel(),
            n,
            "add_row: bias width {} does not match {} columns",
            self.value(bias).numel(),
            n
        );
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            for c in 0..n {
                data.push(self.value(a).at(r, c) + self.value(bias).data()[c]);
            }
        }
        self.push(Tensor::from_vec(vec![m, n], data).unwrap(), Op::AddRow(a, bias))
    }

    pub fn sub(&mut self, a: Val, b: Val) -> Val {
        self.check_same_shape("sub", a, b);
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x - y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_vec(shape, data).unwrap(), Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Val, b: Val) -> Val {
        self.check_same_shape("mul", a, b);
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_vec(shape, data).unwrap(), Op::Mul(a, b))
    }

    /// `a [m×n] * s [m×1]`, the column vector scaling each row.
    pub fn mul_col(&mut self, a: Val, s: Val) -> Val {
        let (m, n) = (self.value(a).rows(), self.value(a).cols());
        assert_eq!(self.value(s).rows(), m, "mul_col: row counts differ");
        assert_eq!(self.value(s).cols(), 1, "mul_col: scale must be [m×1]");
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            let f = self.value(s).at(r, 0);
            for c in 0..n {
                data.push(self.value(a).at(r, c) * f);
            }
        }
        self.push(Tensor::from_vec(vec![m, n], data).unwrap(), Op::MulCol(a, s))
    }

    pub fn scale(&mut self, a: Val, factor: f64) -> Val {
        let data = self.value(a).data().iter().map(|x| x * factor).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_vec(shape, data).unwrap(), Op::Scale(a, factor))
    }

    pub fn matmul(&mut self, a: Val, b: Val) -> Val {
        let value = matmul(self.value(a), self.value(b));
        self.push(value, Op::Matmul(a, b))
    }

    pub fn transpose(&mut self, a: Val) -> Val {
        let value = transpose(self.value(a));
        self.push(value, Op::Transpose(a))
    }

    fn unary(&mut self, a: Val, f: impl Fn(f64) -> f64, op: Op) -> Val {
        let data = self.value(a).data().iter().map(|&x| f(x)).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_vec(shape, data).unwrap(), op)
    }

    pub fn tanh(&mut self, a: Val) -> Val {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Val) -> Val {
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Val) -> Val {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// Elementwise square root; the gradient at exactly zero is defined as zero.
    pub fn sqrt(&mut self, a: Val) -> Val {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    /// Numerically stable softmax over each row; rows sum to one.
    pub fn softmax_rows(&mut self, a: Val) -> Val {
        let (m, n) = (self.value(a).rows(), self.value(a).cols());
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            let row = self.value(a).row(r);
            let max = row.iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
            let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            data.extend(exps.iter().map(|e| e / sum));
        }
        self.push(Tensor::from_vec(vec![m, n], data).unwrap(), Op::SoftmaxRows(a))
    }

    pub fn sum_all(&mut self, a: Val) -> Val {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Val) -> Val {
        let n = self.value(a).numel();
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s / n as f64), Op::MeanAll(a))
    }

    /// Row sums: `[m×n] -> [m×1]`.
    pub fn sum_cols(&mut self, a: Val) -> Val {
        let (m, n) = (self.value(a).rows(), self.value(a).cols());
        let mut data = Vec::with_capacity(m);
        for r in 0..m {
            data.push(self.value(a).row(r).iter().sum());
        }
        let _ = n;
        self.push(Tensor::from_vec(vec![m, 1], data).unwrap(), Op::SumCols(a))
    }

    /// Horizontal concatenation of 2-D tensors sharing a row count.
    pub fn concat_cols(&mut self, parts: &[Val]) -> Val {
        assert!(!parts.is_empty(), "concat_cols: no operands");
        let m = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for p in parts {
                assert_eq!(self.value(*p).rows(), m, "concat_cols: row counts differ");
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        self.push(
            Tensor::from_vec(vec![m, total], data).unwrap(),
            Op::ConcatCols(parts.to_vec()),
        )
    }

    /// Vertical concatenation of 2-D tensors sharing a column count.
    pub fn concat_rows(&mut self, parts: &[Val]) -> Val {
        assert!(!parts.is_empty(), "concat_rows: no operands");
        let n = self.value(parts[0]).cols();
        let total: usize = parts.iter().map(|p| self.value(*p).rows()).sum();
        let mut data = Vec::with_capacity(total * n);
        for p in parts {
            assert_eq!(self.value(*p).cols(), n, "concat_rows: column counts differ");
            data.extend_from_slice(self.value(*p).data());
        }
        self.push(
            Tensor::from_vec(vec![total, n], data).unwrap(),
            Op::ConcatRows(parts.to_vec()),
        )
    }

    /// Select (possibly repeated) rows; the gradient scatter-adds back.
    pub fn gather_rows(&mut self, a: Val, idx: &[usize]) -> Val {
        let n = self.value(a).cols();
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            data.extend_from_slice(self.value(a).row(i));
        }
        self.push(
            Tensor::from_vec(vec![idx.len(), n], data).unwrap(),
            Op::GatherRows(a, idx.to_vec()),
        )
    }

    /// Scatter-add rows of `a [e×n]` into a fresh `[rows×n]` tensor:
    /// `out[dst[i]] += a[i]`.
    pub fn scatter_rows(&mut self, a: Val, dst: &[usize], rows: usize) -> Val {
        let (e, n) = (self.value(a).rows(), self.value(a).cols());
        assert_eq!(e, dst.len(), "scatter_rows: destination list length");
        let mut out = Tensor::zeros(&[rows, n]);
        for (i, &d) in dst.iter().enumerate() {
            assert!(d < rows, "scatter_rows: destination out of range");
            for c in 0..n {
                let v = out.at(d, c) + self.value(a).at(i, c);
                out.set_at(d, c, v);
            }
        }
        self.push(out, Op::ScatterRows(a, dst.to_vec(), rows))
    }

    pub fn slice_cols(&mut self, a: Val, start: usize, len: usize) -> Val {
        let (m, n) = (self.value(a).rows(), self.value(a).cols());
        assert!(start + len <= n, "slice_cols out of range");
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&self.value(a).row(r)[start..start + len]);
        }
        self.push(
            Tensor::from_vec(vec![m, len], data).unwrap(),
            Op::SliceCols(a, start, len),
        )
    }

    pub fn reshape(&mut self, a: Val, shape: &[usize]) -> Val {
        let value = self.value(a).reshaped(shape).expect("reshape: element count mismatch");
        self.push(value, Op::Reshape(a))
    }

    /// Column-wise max over rows: `[m×n] -> [1×n]`. Ties route the gradient
    /// to the first maximal row.
    pub fn max_pool_rows(&mut self, a: Val) -> Val {
        let (m, n) = (self.value(a).rows(), self.value(a).cols());
        assert!(m > 0, "max_pool_rows on empty tensor");
        let mut data = vec![f64::NEG_INFINITY; n];
        for r in 0..m {
            for c in 0..n {
                data[c] = data[c].max(self.value(a).at(r, c));
            }
        }
        self.push(Tensor::from_vec(vec![1, n], data).unwrap(), Op::MaxPoolRows(a))
    }

    /// `-log softmax(scores)[target]` for a `[1×k]` score row.
    pub fn cross_entropy_row(&mut self, scores: Val, target: usize) -> Val {
        let t = self.value(scores);
        assert_eq!(t.rows(), 1, "cross_entropy_row expects a [1×k] row");
        let row = t.row(0);
        assert!(target < row.len(), "cross_entropy_row: target out of range");
        let max = row.iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - row[target];
        self.push(Tensor::scalar(loss), Op::CrossEntropyRow(scores, target))
    }

    /// Reverse sweep from a scalar `loss`; gradients of parameter leaves are
    /// accumulated into `store`. Errors when replayed without a new forward.
    pub fn backward(&mut self, loss: Val, store: &mut ParameterStore) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardReplayed);
        }
        if !self.value(loss).is_scalar() {
            return Err(Error::ShapeMismatch {
                context: "backward".into(),
                expected: "scalar loss".into(),
                actual: format!("{:?}", self.value(loss).shape()),
            });
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..self.nodes.len()).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            // Re-borrow locally; accumulation helper defers mutation.
            let acc = |grads: &mut Vec<Option<Tensor>>, v: Val, delta: Tensor| {
                match &mut grads[v.0] {
                    Some(existing) => {
                        for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                            *e += d;
                        }
                    }
                    slot @ None => *slot = Some(delta),
                }
            };
            match self.nodes[i].op.clone() {
                Op::Leaf { param } => {
                    if let Some(name) = param {
                        store.accumulate_grad(&name, &g)?;
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, a, g.clone());
                    acc(&mut grads, b, g);
                }
                Op::AddRow(a, bias) => {
                    let (m, n) = (g.rows(), g.cols());
                    let mut bg = Tensor::zeros(self.nodes[bias.0].value.shape());
                    for r in 0..m {
                        for c in 0..n {
                            bg.data_mut()[c] += g.at(r, c);
                        }
                    }
                    acc(&mut grads, a, g);
                    acc(&mut grads, bias, bg);
                }
                Op::Sub(a, b) => {
                    let neg =
                        Tensor::from_vec(g.shape().to_vec(), g.data().iter().map(|x| -x).collect())
                            .unwrap();
                    acc(&mut grads, a, g);
                    acc(&mut grads, b, neg);
                }
                Op::Mul(a, b) => {
                    let da = Tensor::from_vec(
                        g.shape().to_vec(),
                        g.data()
                            .iter()
                            .zip(self.nodes[b.0].value.data())
                            .map(|(g, b)| g * b)
                            .collect(),
                    )
                    .unwrap();
                    let db = Tensor::from_vec(
                        g.shape().to_vec(),
                        g.data()
                            .iter()
                            .zip(self.nodes[a.0].value.data())
                            .map(|(g, a)| g * a)
                            .collect(),
                    )
                    .unwrap();
                    acc(&mut grads, a, da);
                    acc(&mut grads, b, db);
                }
                Op::MulCol(a, s) => {
                    let (m, n) = (g.rows(), g.cols());
                    let mut da = Tensor::zeros(&[m, n]);
                    let mut ds = Tensor::zeros(&[m, 1]);
                    for r in 0..m {
                        let f = self.nodes[s.0].value.at(r, 0);
                        let mut dot = 0.0;
                        for c in 0..n {
                            da.set_at(r, c, g.at(r, c) * f);
                            dot += g.at(r, c) * self.nodes[a.0].value.at(r, c);
                        }
                        ds.set_at(r, 0, dot);
                    }
                    acc(&mut grads, a, da);
                    acc(&mut grads, s, ds);
                }
                Op::Scale(a, f) => {
                    let da = Tensor::from_vec(
                        g.shape().to_vec(),
                        g.data().iter().map(|x| x * f).collect(),
                    )
                    .unwrap();
                    acc(&mut grads, a, da);
                }
                Op::Matmul(a, b) => {
                    let bt = transpose(&self.nodes[b.0].value);
                    let at = transpose(&self.nodes[a.0].value);
                    let da = matmul(&g, &bt);
                    let db = matmul(&at, &g);
                    acc(&mut grads, a, da);
                    acc(&mut grads, b, db);
                }
                Op::Transpose(a) => {
                    acc(&mut grads, a, transpose(&g));
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[i].value;
                    let da = Tensor::from_vec(
                        g.shape().to_vec(),
                        g.data()
                            .iter()
                            .zip(y.data())
                            .map(|(g, y)| g * (1.0 - y * y))
                            .collect(),
                    )
                    .unwrap();
                    acc(&mut grads, a, da);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[i].value;
                    let da = Tensor::from_vec(
                        g.shape().to_vec(),
                        g.data()
                            .iter()
                            .zip(y.data())
                            .map(|(g, y)| g * y * (1.0 - y))
                            .collect(),
                    )
                    .unwrap();
                    acc(&mut grads, a, da);
                }
                Op::Relu(a) => {
                    let x = &self.nodes[a.0].value;
                    let da = Tensor::from_vec(
                        g.shape().to_vec(),
                        g.data()
                            .iter()
                            .zip(x.data())
                            .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                            .collect(),
                    )
                    .unwrap();
                    acc(&mut grads, a, da);
                }
                Op::Sqrt(a) => {
                    let y = &self.nodes[i].value;
                    let da = Tensor::from_vec(
                        g.shape().to_vec(),
                        g.data()
                            .iter()
                            .zip(y.data())
                            .map(|(g, y)| if *y > 0.0 { g * 0.5 / y } else { 0.0 })
                            .collect(),
                    )
                    .unwrap();
                    acc(&mut grads, a, da);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[i].value;
                    let (m, n) = (y.rows(), y.cols());
                    let mut da = Tensor::zeros(&[m, n]);
                    for r in 0..m {
                        let dot: f64 = (0..n).map(|c| g.at(r, c) * y.at(r, c)).sum();
                        for c in 0..n {
                            da.set_at(r, c, y.at(r, c) * (g.at(r, c) - dot));
                        }
                    }
                    acc(&mut grads, a, da);
                }
                Op::SumAll(a) => {
                    let da = Tensor::full(self.nodes[a.0].value.shape(), g.data()[0]);
                    acc(&mut grads, a, da);
                }
                Op::MeanAll(a) => {
                    let n = self.nodes[a.0].value.numel() as f64;
                    let da = Tensor::full(self.nodes[a.0].value.shape(), g.data()[0] / n);
                    acc(&mut grads, a, da);
                }
                Op::SumCols(a) => {
                    let (m, n) = (
                        self.nodes[a.0].value.rows(),
                        self.nodes[a.0].value.cols(),
                    );
                    let mut da = Tensor::zeros(&[m, n]);
                    for r in 0..m {
                        for c in 0..n {
                            da.set_at(r, c, g.at(r, 0));
                        }
                    }
                    acc(&mut grads, a, da);
                }
                Op::ConcatCols(parts) => {
                    let m = g.rows();
                    let mut offset = 0;
                    for p in parts {
                        let w = self.nodes[p.0].value.cols();
                        let mut dp = Tensor::zeros(&[m, w]);
                        for r in 0..m {
                            for c in 0..w {
                                dp.set_at(r, c, g.at(r, offset + c));
                            }
                        }
                        acc(&mut grads, p, dp);
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let n = g.cols();
                    let mut offset = 0;
                    for p in parts {
                        let h = self.nodes[p.0].value.rows();
                        let mut dp = Tensor::zeros(&[h, n]);
                        for r in 0..h {
                            for c in 0..n {
                                dp.set_at(r, c, g.at(offset + r, c));
                            }
                        }
                        acc(&mut grads, p, dp);
                        offset += h;
                    }
                }
                Op::GatherRows(a, idx) => {
                    let (m, n) = (
                        self.nodes[a.0].value.rows(),
                        self.nodes[a.0].value.cols(),
                    );
                    let mut da = Tensor::zeros(&[m, n]);
                    for (r, &src) in idx.iter().enumerate() {
                        for c in 0..n {
                            let v = da.at(src, c) + g.at(r, c);
                            da.set_at(src, c, v);
                        }
                    }
                    acc(&mut grads, a, da);
                }
                Op::ScatterRows(a, dst, _rows) => {
                    let (e, n) = (
                        self.nodes[a.0].value.rows(),
                        self.nodes[a.0].value.cols(),
                    );
                    let mut da = Tensor::zeros(&[e, n]);
                    for (r, &d) in dst.iter().enumerate() {
                        for c in 0..n {
                            da.set_at(r, c, g.at(d, c));
                        }
                    }
                    acc(&mut grads, a, da);
                }
                Op::SliceCols(a, start, len) => {
                    let (m, n) = (
                        self.nodes[a.0].value.rows(),
                        self.nodes[a.0].value.cols(),
                    );
                    let mut da = Tensor::zeros(&[m, n]);
                    for r in 0..m {
                        for c in 0..len {
                            da.set_at(r, start + c, g.at(r, c));
                        }
                    }
                    acc(&mut grads, a, da);
                }
                Op::Reshape(a) => {
                    let da = g.reshaped(self.nodes[a.0].value.shape()).unwrap();
                    acc(&mut grads, a, da);
                }
                Op::MaxPoolRows(a) => {
                    let x = &self.nodes[a.0].value;
                    let (m, n) = (x.rows(), x.cols());
                    let mut da = Tensor::zeros(&[m, n]);
                    for c in 0..n {
                        let mut best = 0;
                        for r in 1..m {
                            if x.at(r, c) > x.at(best, c) {
                                best = r;
                            }
                        }
                        da.set_at(best, c, g.at(0, c));
                    }
                    acc(&mut grads, a, da);
                }
                Op::CrossEntropyRow(scores, target) => {
                    let s = &self.nodes[scores.0].value;
                    let row = s.row(0);
                    let max = row.iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
                    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
                    let sum: f64 = exps.iter().sum();
                    let gs = g.data()[0];
                    let mut da = Tensor::zeros(&[1, row.len()]);
                    for (c, e) in exps.iter().enumerate() {
                        let p = e / sum;
                        let delta = if c == target { 1.0 } else { 0.0 };
                        da.set_at(0, c, gs * (p - delta));
                    }
                    acc(&mut grads, scores, da);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, shape: &[usize], data: Vec<f64>) -> ParameterStore {
        let mut store = ParameterStore::new();
        store
            .register(name, Tensor::from_vec(shape.to_vec(), data).unwrap())
            .unwrap();
        store
    }

    #[test]
    fn sum_of_parameter_gives_unit_gradients() {
        let mut store = store_with("w", &[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        let loss = tape.sum_all(w);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad("w").unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn zero_scaled_loss_gives_zero_gradients() {
        let mut store = store_with("w", &[1, 2], vec![3.0, -4.0]);
        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        let s = tape.sum_all(w);
        let loss = tape.scale(s, 0.0);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad("w").unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_twice_errors() {
        let mut store = store_with("w", &[1, 1], vec![2.0]);
        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        let loss = tape.sum_all(w);
        tape.backward(loss, &mut store).unwrap();
        assert!(matches!(
            tape.backward(loss, &mut store),
            Err(Error::BackwardReplayed)
        ));
    }

    #[test]
    fn unreached_parameters_keep_zero_gradient() {
        let mut store = store_with("used", &[1, 1], vec![2.0]);
        store.register("unused", Tensor::scalar(5.0)).unwrap();
        let mut tape = Tape::new();
        let w = tape.param(&store, "used").unwrap();
        let loss = tape.sum_all(w);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad("unused").unwrap().data(), &[0.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[
            vec![1.0, 2.0, 3.0],
            vec![-5.0, 0.0, 5.0],
        ]));
        let y = tape.softmax_rows(x);
        for r in 0..2 {
            let s: f64 = tape.value(y).row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gather_scatter_roundtrip_gradients() {
        // loss = sum(gather(w, [0,0,1])) => dw = [[2,2],[1,1],[0,0]]
        let mut store = store_with("w", &[3, 2], vec![1.0; 6]);
        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        let gathered = tape.gather_rows(w, &[0, 0, 1]);
        let loss = tape.sum_all(gathered);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(
            store.grad("w").unwrap().data(),
            &[2.0, 2.0, 1.0, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn reused_parameter_leaf_accumulates() {
        // loss = sum(w) + sum(w) => dw = 2
        let mut store = store_with("w", &[1, 2], vec![1.0, 1.0]);
        let mut tape = Tape::new();
        let w1 = tape.param(&store, "w").unwrap();
        let w2 = tape.param(&store, "w").unwrap();
        assert_eq!(w1, w2);
        let s1 = tape.sum_all(w1);
        let s2 = tape.sum_all(w2);
        let loss = tape.add(s1, s2);
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(store.grad("w").unwrap().data(), &[2.0, 2.0]);
    }
}
