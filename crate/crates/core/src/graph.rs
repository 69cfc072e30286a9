//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Graph`] is a tape built fresh for every forward pass. Parameters are
//! borrowed from a [`ParamStore`] and become leaves of the tape; after
//! [`Graph::backward`] their gradients can be collected with
//! [`Graph::param_grads`].
//!
//! Shape errors inside graph construction are programming errors and panic;
//! public model operations validate user-facing shapes before reaching here.

use std::collections::HashMap;
use std::sync::Arc;

use crate::nn::{ParamId, ParamStore};
use crate::tensor::Matrix;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Sparse, constant column-mixing weights: output column `k` is
/// `sum_m w_km * input[:, m]` over the listed `(m, w_km)` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnMix {
    pub input_cols: usize,
    pub entries: Vec<Vec<(usize, f64)>>,
}

impl ColumnMix {
    pub fn output_cols(&self) -> usize {
        self.entries.len()
    }

    /// Dense `input_cols x output_cols` form, handy for tests.
    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.input_cols, self.entries.len());
        for (k, row) in self.entries.iter().enumerate() {
            for &(src, w) in row {
                m[(src, k)] += w;
            }
        }
        m
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.cols(), self.input_cols, "column mix input width mismatch");
        let mut out = Matrix::zeros(x.rows(), self.entries.len());
        for r in 0..x.rows() {
            let src = x.row(r);
            let dst = out.row_mut(r);
            for (k, row) in self.entries.iter().enumerate() {
                dst[k] = row.iter().map(|&(m, w)| w * src[m]).sum();
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FocalParams {
    pub gamma: f64,
    pub alpha: f64,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddColumn(Var, Var),
    MulColumn(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    SoftmaxAll(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normed: Matrix,
        inv_std: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    MeanCols(Var),
    MeanRows(Var),
    BroadcastCols(Var),
    SumAll(Var),
    Gather {
        src: Var,
        index: Arc<Vec<Option<usize>>>,
    },
    MixCols {
        src: Var,
        mix: Arc<ColumnMix>,
    },
    GroupMax {
        src: Var,
        argmax: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
    KlEps {
        q: Var,
        p: Var,
        eps: f64,
    },
    Focal {
        pred: Var,
        target: Arc<Matrix>,
        params: FocalParams,
        clamp: f64,
    },
    Dice {
        pred: Var,
        target: Arc<Matrix>,
        smooth: f64,
    },
}

struct Node {
    value: Matrix,
    op: Op,
}

pub struct Graph<'p> {
    store: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    grads: Vec<Option<Matrix>>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const LN_EPS: f64 = 1e-5;

impl<'p> Graph<'p> {
    /// A graph without parameters; only [`Graph::input`] leaves are available.
    pub fn new() -> Self {
        Self {
            store: None,
            nodes: Vec::new(),
            params: HashMap::new(),
            grads: Vec::new(),
        }
    }

    pub fn with_params(store: &'p ParamStore) -> Self {
        Self {
            store: Some(store),
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf bound to a stored parameter; repeated calls share one node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let store = self.store.expect("graph built without a parameter store");
        let v = self.push(store.value(id).clone(), Op::Leaf);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(value, Op::Mul(a, b))
    }

    /// Adds an `r x 1` column to every column of an `r x c` matrix.
    pub fn add_column(&mut self, x: Var, col: Var) -> Var {
        let (xv, cv) = (self.value(x), self.value(col));
        assert_eq!((xv.rows(), 1), cv.shape(), "add_column expects an r x 1 column");
        let value = Matrix::from_fn(xv.rows(), xv.cols(), |r, c| xv[(r, c)] + cv[(r, 0)]);
        self.push(value, Op::AddColumn(x, col))
    }

    /// Multiplies every column of `x` elementwise by an `r x 1` column.
    pub fn mul_column(&mut self, x: Var, col: Var) -> Var {
        let (xv, cv) = (self.value(x), self.value(col));
        assert_eq!((xv.rows(), 1), cv.shape(), "mul_column expects an r x 1 column");
        let value = Matrix::from_fn(xv.rows(), xv.cols(), |r, c| xv[(r, c)] * cv[(r, 0)]);
        self.push(value, Op::MulColumn(x, col))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let value = self.value(x).scale(s);
        self.push(value, Op::Scale(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x))
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(gelu);
        self.push(value, Op::Gelu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        self.push(value, Op::Sigmoid(x))
    }

    /// Softmax along each row.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut value = xv.clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        self.push(value, Op::SoftmaxRows(x))
    }

    /// Softmax normalised over every entry of the matrix jointly.
    pub fn softmax_all(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        softmax_in_place(value.as_mut_slice());
        self.push(value, Op::SoftmaxAll(x))
    }

    /// Normalises each column over its rows, then applies a per-row gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        assert_eq!(self.shape(gain), (rows, 1));
        assert_eq!(self.shape(bias), (rows, 1));
        let mut normed = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(cols);
        for c in 0..cols {
            let mean = (0..rows).map(|r| xv[(r, c)]).sum::<f64>() / rows as f64;
            let var = (0..rows).map(|r| (xv[(r, c)] - mean).powi(2)).sum::<f64>() / rows as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            for r in 0..rows {
                normed[(r, c)] = (xv[(r, c)] - mean) * is;
            }
            inv_std.push(is);
        }
        let (gv, bv) = (self.value(gain), self.value(bias));
        let value = Matrix::from_fn(rows, cols, |r, c| normed[(r, c)] * gv[(r, 0)] + bv[(r, 0)]);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            },
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let mats: Vec<&Matrix> = parts.iter().map(|&v| self.value(v)).collect();
        let value = Matrix::concat_cols(&mats);
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let mats: Vec<&Matrix> = parts.iter().map(|&v| self.value(v)).collect();
        let value = Matrix::concat_rows(&mats);
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Var {
        let value = self.value(x).slice_cols(start, end);
        self.push(value, Op::SliceCols(x, start))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Var {
        let value = self.value(x).slice_rows(start, end);
        self.push(value, Op::SliceRows(x, start))
    }

    /// Mean over columns: `r x c -> r x 1`.
    pub fn mean_cols(&mut self, x: Var) -> Var {
        let value = self.value(x).mean_cols();
        self.push(value, Op::MeanCols(x))
    }

    /// Mean over rows: `r x c -> 1 x c`.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = xv.rows() as f64;
        let value = Matrix::from_fn(1, xv.cols(), |_, c| {
            (0..xv.rows()).map(|r| xv[(r, c)]).sum::<f64>() / n
        });
        self.push(value, Op::MeanRows(x))
    }

    /// Repeats an `r x 1` column `n` times.
    pub fn broadcast_cols(&mut self, x: Var, n: usize) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.cols(), 1, "broadcast_cols expects a column");
        let value = Matrix::from_fn(xv.rows(), n, |r, _| xv[(r, 0)]);
        self.push(value, Op::BroadcastCols(x))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let value = Matrix::scalar(self.value(x).sum());
        self.push(value, Op::SumAll(x))
    }

    /// Flat gather: output element `k` is `src.flat[index[k]]`, or zero for `None`.
    pub fn gather(&mut self, src: Var, rows: usize, cols: usize, index: Arc<Vec<Option<usize>>>) -> Var {
        assert_eq!(index.len(), rows * cols, "gather index length mismatch");
        let sv = self.value(src).as_slice();
        let data = index.iter().map(|i| i.map_or(0.0, |i| sv[i])).collect();
        let value = Matrix::from_vec(rows, cols, data);
        self.push(value, Op::Gather { src, index })
    }

    /// Selects columns of `src` in the given order (repeats allowed).
    pub fn gather_cols(&mut self, src: Var, columns: &[usize]) -> Var {
        let (rows, cols) = self.shape(src);
        let mut index = Vec::with_capacity(rows * columns.len());
        for r in 0..rows {
            for &c in columns {
                assert!(c < cols, "gather_cols column out of range");
                index.push(Some(r * cols + c));
            }
        }
        self.gather(src, rows, columns.len(), Arc::new(index))
    }

    pub fn mix_cols(&mut self, src: Var, mix: Arc<ColumnMix>) -> Var {
        let value = mix.apply(self.value(src));
        self.push(value, Op::MixCols { src, mix })
    }

    /// Max over contiguous column groups. `offsets` has one more entry than
    /// there are groups; group `g` spans columns `offsets[g]..offsets[g + 1]`.
    pub fn group_max(&mut self, src: Var, offsets: &[usize]) -> Var {
        let sv = self.value(src);
        let groups = offsets.len() - 1;
        let mut value = Matrix::zeros(sv.rows(), groups);
        let mut argmax = vec![0usize; sv.rows() * groups];
        for r in 0..sv.rows() {
            let row = sv.row(r);
            for g in 0..groups {
                let (s, e) = (offsets[g], offsets[g + 1]);
                assert!(s < e, "empty group in group_max");
                let mut best = s;
                for c in s + 1..e {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                value[(r, g)] = row[best];
                argmax[r * groups + g] = best;
            }
        }
        self.push(value, Op::GroupMax { src, argmax })
    }

    /// Softmax cross-entropy of a logit vector (any `1 x K` / `K x 1` shape).
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Var {
        let lv = self.value(logits).as_slice();
        assert!(target < lv.len(), "cross-entropy target out of range");
        let mut probs = lv.to_vec();
        softmax_in_place(&mut probs);
        let max = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + lv.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let value = Matrix::scalar(lse - lv[target]);
        self.push(value, Op::CrossEntropy { logits, target, probs })
    }

    /// `sum_n q_n * ln(eps + q_n / (eps + p_n))` for same-shaped `q`, `p`.
    pub fn kl_eps(&mut self, q: Var, p: Var, eps: f64) -> Var {
        let (qv, pv) = (self.value(q), self.value(p));
        assert_eq!(qv.shape(), pv.shape(), "kl_eps shape mismatch");
        let total = qv
            .as_slice()
            .iter()
            .zip(pv.as_slice())
            .map(|(&qn, &pn)| qn * (eps + qn / (eps + pn)).ln())
            .sum();
        self.push(Matrix::scalar(total), Op::KlEps { q, p, eps })
    }

    /// Mean soft-target focal loss; `pred` is clamped to `[clamp, 1 - clamp]`.
    pub fn focal(&mut self, pred: Var, target: Arc<Matrix>, params: FocalParams, clamp: f64) -> Var {
        let pv = self.value(pred);
        assert_eq!(pv.shape(), target.shape(), "focal shape mismatch");
        let n = pv.len() as f64;
        let total: f64 = pv
            .as_slice()
            .iter()
            .zip(target.as_slice())
            .map(|(&p, &t)| focal_term(p.clamp(clamp, 1.0 - clamp), t, params).0)
            .sum();
        self.push(
            Matrix::scalar(total / n),
            Op::Focal {
                pred,
                target,
                params,
                clamp,
            },
        )
    }

    /// Soft dice loss `1 - (2 sum(p t) + s) / (sum p + sum t + s)`.
    pub fn dice(&mut self, pred: Var, target: Arc<Matrix>, smooth: f64) -> Var {
        let pv = self.value(pred);
        assert_eq!(pv.shape(), target.shape(), "dice shape mismatch");
        let (inter, sp, st) = dice_sums(pv, &target);
        let value = 1.0 - (2.0 * inter + smooth) / (sp + st + smooth);
        self.push(Matrix::scalar(value), Op::Dice { pred, target, smooth })
    }

    /// Runs reverse accumulation from a scalar output.
    pub fn backward(&mut self, output: Var) {
        assert_eq!(self.shape(output), (1, 1), "backward expects a scalar output");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::scalar(1.0));
        for i in (0..=output.0).rev() {
            let Some(grad) = grads[i].take() else { continue };
            self.propagate(i, &grad, &mut grads);
            grads[i] = Some(grad);
        }
        self.grads = grads;
    }

    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Which side of every piecewise branch the forward pass took: ReLU
    /// input signs, max-pool winners and focal clamp regions. Two inputs with
    /// the same pattern lie on one smooth piece.
    pub fn branch_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => out.extend(self.value(*x).as_slice().iter().map(|&v| usize::from(v > 0.0))),
                Op::GroupMax { argmax, .. } => out.extend_from_slice(argmax),
                Op::Focal { pred, clamp, .. } => out.extend(self.value(*pred).as_slice().iter().map(|&p| {
                    if p < *clamp {
                        0
                    } else if p > 1.0 - clamp {
                        2
                    } else {
                        1
                    }
                })),
                _ => {}
            }
        }
        out
    }

    /// Gradients of every parameter touched by the forward pass.
    pub fn param_grads(&self) -> Vec<(ParamId, Matrix)> {
        let mut out: Vec<(ParamId, Matrix)> = self
            .params
            .iter()
            .map(|(&id, &v)| {
                let g = self
                    .grad(v)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(self.value(v).rows(), self.value(v).cols()));
                (id, g)
            })
            .collect();
        out.sort_by_key(|(id, _)| id.index());
        out
    }

    fn propagate(&self, i: usize, grad: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, grad.matmul_nt(bv));
                accumulate(grads, *b, av.matmul_tn(grad));
            }
            Op::Transpose(a) => accumulate(grads, *a, grad.transpose()),
            Op::Add(a, b) => {
                accumulate(grads, *a, grad.clone());
                accumulate(grads, *b, grad.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, grad.clone());
                accumulate(grads, *b, grad.scale(-1.0));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, grad.zip_map(bv, |g, y| g * y));
                accumulate(grads, *b, grad.zip_map(av, |g, x| g * x));
            }
            Op::AddColumn(x, col) => {
                accumulate(grads, *x, grad.clone());
                accumulate(grads, *col, grad.mean_cols().scale(grad.cols() as f64));
            }
            Op::MulColumn(x, col) => {
                let (xv, cv) = (self.value(*x), self.value(*col));
                let dx = Matrix::from_fn(grad.rows(), grad.cols(), |r, c| grad[(r, c)] * cv[(r, 0)]);
                let dc = Matrix::from_fn(grad.rows(), 1, |r, _| {
                    grad.row(r).iter().zip(xv.row(r)).map(|(g, x)| g * x).sum()
                });
                accumulate(grads, *x, dx);
                accumulate(grads, *col, dc);
            }
            Op::Scale(x, s) => accumulate(grads, *x, grad.scale(*s)),
            Op::Relu(x) => {
                let xv = self.value(*x);
                accumulate(grads, *x, grad.zip_map(xv, |g, v| if v > 0.0 { g } else { 0.0 }));
            }
            Op::Gelu(x) => {
                let xv = self.value(*x);
                accumulate(grads, *x, grad.zip_map(xv, |g, v| g * gelu_grad(v)));
            }
            Op::Sigmoid(x) => {
                accumulate(grads, *x, grad.zip_map(out, |g, y| g * y * (1.0 - y)));
            }
            Op::SoftmaxRows(x) => {
                let mut dx = Matrix::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let (y, g) = (out.row(r), grad.row(r));
                    let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                    for (d, (yv, gv)) in dx.row_mut(r).iter_mut().zip(y.iter().zip(g)) {
                        *d = yv * (gv - dot);
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::SoftmaxAll(x) => {
                let dot: f64 = out.as_slice().iter().zip(grad.as_slice()).map(|(a, b)| a * b).sum();
                accumulate(grads, *x, out.zip_map(grad, |y, g| y * (g - dot)));
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            } => {
                let gv = self.value(*gain);
                let (rows, cols) = normed.shape();
                let n = rows as f64;
                let mut dx = Matrix::zeros(rows, cols);
                let mut dgain = Matrix::zeros(rows, 1);
                let mut dbias = Matrix::zeros(rows, 1);
                for c in 0..cols {
                    let mut sum_d = 0.0;
                    let mut sum_dn = 0.0;
                    for r in 0..rows {
                        let d = grad[(r, c)] * gv[(r, 0)];
                        sum_d += d;
                        sum_dn += d * normed[(r, c)];
                        dgain[(r, 0)] += grad[(r, c)] * normed[(r, c)];
                        dbias[(r, 0)] += grad[(r, c)];
                    }
                    for r in 0..rows {
                        let d = grad[(r, c)] * gv[(r, 0)];
                        dx[(r, c)] = inv_std[c] / n * (n * d - sum_d - normed[(r, c)] * sum_dn);
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *gain, dgain);
                accumulate(grads, *bias, dbias);
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    accumulate(grads, p, grad.slice_cols(start, start + w));
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let h = self.value(p).rows();
                    accumulate(grads, p, grad.slice_rows(start, start + h));
                    start += h;
                }
            }
            Op::SliceCols(x, start) => {
                let xv = self.value(*x);
                let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                for r in 0..grad.rows() {
                    dx.row_mut(r)[*start..*start + grad.cols()].copy_from_slice(grad.row(r));
                }
                accumulate(grads, *x, dx);
            }
            Op::SliceRows(x, start) => {
                let xv = self.value(*x);
                let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                for r in 0..grad.rows() {
                    dx.row_mut(start + r).copy_from_slice(grad.row(r));
                }
                accumulate(grads, *x, dx);
            }
            Op::MeanCols(x) => {
                let xv = self.value(*x);
                let n = xv.cols() as f64;
                accumulate(grads, *x, Matrix::from_fn(xv.rows(), xv.cols(), |r, _| grad[(r, 0)] / n));
            }
            Op::MeanRows(x) => {
                let xv = self.value(*x);
                let n = xv.rows() as f64;
                accumulate(grads, *x, Matrix::from_fn(xv.rows(), xv.cols(), |_, c| grad[(0, c)] / n));
            }
            Op::BroadcastCols(x) => {
                let dx = Matrix::from_fn(grad.rows(), 1, |r, _| grad.row(r).iter().sum());
                accumulate(grads, *x, dx);
            }
            Op::SumAll(x) => {
                let xv = self.value(*x);
                accumulate(grads, *x, Matrix::filled(xv.rows(), xv.cols(), grad.item()));
            }
            Op::Gather { src, index } => {
                let sv = self.value(*src);
                let mut dx = Matrix::zeros(sv.rows(), sv.cols());
                let d = dx.as_mut_slice();
                for (g, i) in grad.as_slice().iter().zip(index.iter()) {
                    if let Some(i) = i {
                        d[*i] += g;
                    }
                }
                accumulate(grads, *src, dx);
            }
            Op::MixCols { src, mix } => {
                let sv = self.value(*src);
                let mut dx = Matrix::zeros(sv.rows(), sv.cols());
                for r in 0..grad.rows() {
                    let g = grad.row(r);
                    let d = dx.row_mut(r);
                    for (k, entries) in mix.entries.iter().enumerate() {
                        for &(m, w) in entries {
                            d[m] += w * g[k];
                        }
                    }
                }
                accumulate(grads, *src, dx);
            }
            Op::GroupMax { src, argmax } => {
                let sv = self.value(*src);
                let groups = grad.cols();
                let mut dx = Matrix::zeros(sv.rows(), sv.cols());
                for r in 0..grad.rows() {
                    for g in 0..groups {
                        dx[(r, argmax[r * groups + g])] += grad[(r, g)];
                    }
                }
                accumulate(grads, *src, dx);
            }
            Op::CrossEntropy { logits, target, probs } => {
                let lv = self.value(*logits);
                let g = grad.item();
                let mut d = probs.clone();
                d[*target] -= 1.0;
                let dx = Matrix::from_vec(lv.rows(), lv.cols(), d.into_iter().map(|v| v * g).collect());
                accumulate(grads, *logits, dx);
            }
            Op::KlEps { q, p, eps } => {
                let (qv, pv) = (self.value(*q), self.value(*p));
                let g = grad.item();
                let mut dq = Matrix::zeros(qv.rows(), qv.cols());
                let mut dp = Matrix::zeros(pv.rows(), pv.cols());
                for k in 0..qv.len() {
                    let (qn, pn) = (qv.as_slice()[k], pv.as_slice()[k]);
                    let denom = eps + pn;
                    let u = eps + qn / denom;
                    dq.as_mut_slice()[k] = g * (u.ln() + qn / (u * denom));
                    dp.as_mut_slice()[k] = -g * qn * qn / (u * denom * denom);
                }
                accumulate(grads, *q, dq);
                accumulate(grads, *p, dp);
            }
            Op::Focal {
                pred,
                target,
                params,
                clamp,
            } => {
                let pv = self.value(*pred);
                let scale = grad.item() / pv.len() as f64;
                let dx = pv.zip_map(target, |p, t| {
                    if p < *clamp || p > 1.0 - *clamp {
                        0.0
                    } else {
                        scale * focal_term(p, t, *params).1
                    }
                });
                accumulate(grads, *pred, dx);
            }
            Op::Dice { pred, target, smooth } => {
                let pv = self.value(*pred);
                let (inter, sp, st) = dice_sums(pv, target);
                let den = sp + st + smooth;
                let num = 2.0 * inter + smooth;
                let g = grad.item();
                let dx = target.map(|t| -g * (2.0 * t * den - num) / (den * den));
                accumulate(grads, *pred, dx);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
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

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

/// Per-point focal term and its derivative with respect to the prediction.
/// Soft targets interpolate linearly between the positive and negative terms.
pub(crate) fn focal_term(p: f64, t: f64, FocalParams { gamma, alpha }: FocalParams) -> (f64, f64) {
    let q = 1.0 - p;
    let pos = -alpha * q.powf(gamma) * p.ln();
    let neg = -(1.0 - alpha) * p.powf(gamma) * q.ln();
    let dpos = -alpha * (q.powf(gamma) / p - gamma * pow_minus_one(q, gamma) * p.ln());
    let dneg = -(1.0 - alpha) * (gamma * pow_minus_one(p, gamma) * q.ln() - p.powf(gamma) / q);
    (t * pos + (1.0 - t) * neg, t * dpos + (1.0 - t) * dneg)
}

/// `x^(gamma - 1)` with the `gamma == 0` case defined as zero contribution.
fn pow_minus_one(x: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        0.0
    } else {
        x.powf(gamma - 1.0)
    }
}

fn dice_sums(pred: &Matrix, target: &Matrix) -> (f64, f64, f64) {
    let inter = pred.as_slice().iter().zip(target.as_slice()).map(|(p, t)| p * t).sum();
    (inter, pred.sum(), target.sum())
}
