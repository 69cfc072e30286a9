//! Parameter storage and the small set of learnable layers the model is
//! assembled from. All layers act on channels-first `C x L` matrices.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::graph::{Graph, Var};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of learnable matrices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// SHA-256 over names, shapes and the exact bit patterns of all values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, value) in self.names.iter().zip(&self.values) {
            h.update(name.as_bytes());
            h.update((value.rows() as u64).to_le_bytes());
            h.update((value.cols() as u64).to_le_bytes());
            for v in value.as_slice() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        format!("{:x}", h.finalize())
    }
}

/// Uniform Glorot initialisation.
pub fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-limit..limit))
}

/// Uniform He initialisation for layers followed by a ReLU.
pub fn he(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let limit = (6.0 / cols as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-limit..limit))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    Glorot,
    He,
}

/// Pointwise (1x1) map `W x + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = match init {
            Init::Glorot => glorot(out_dim, in_dim, rng),
            Init::He => he(out_dim, in_dim, rng),
        };
        let weight = store.add(format!("{name}.weight"), w);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Matrix::zeros(out_dim, 1)));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let y = g.matmul(w, x);
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add_column(y, b)
            }
            None => y,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Matrix::filled(dim, 1, 1.0)),
            bias: store.add(format!("{name}.bias"), Matrix::zeros(dim, 1)),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let gain = g.param(self.gain);
        let bias = g.param(self.bias);
        g.layer_norm(x, gain, bias)
    }
}

/// Stack of pointwise layers with ReLU between them (and after the last one
/// when `relu_last`).
#[derive(Clone, Debug)]
pub struct PointwiseMlp {
    pub layers: Vec<Linear>,
    pub relu_last: bool,
}

impl PointwiseMlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        widths: &[usize],
        relu_last: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut d = in_dim;
        for (i, &w) in widths.iter().enumerate() {
            let init = if relu_last || i + 1 < widths.len() {
                Init::He
            } else {
                Init::Glorot
            };
            layers.push(Linear::new(store, &format!("{name}.{i}"), d, w, true, init, rng));
            d = w;
        }
        Self { layers, relu_last }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn forward(&self, g: &mut Graph, mut x: Var) -> Var {
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, x);
            if self.relu_last || i + 1 < n {
                x = g.relu(x);
            }
        }
        x
    }
}

/// Pre-norm transformer layer: multi-head self-attention and a GELU
/// feed-forward, each wrapped in a residual connection. No positional
/// encoding is added, so the block is permutation-equivariant over columns.
#[derive(Clone, Debug)]
pub struct AttentionBlock {
    pub norm1: LayerNorm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub norm2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub heads: usize,
}

/// Forward result of an [`AttentionBlock`]; `attention[h]` is the `L x L`
/// row-stochastic weight matrix of head `h` (row = query).
pub struct AttentionOutput {
    pub output: Var,
    pub attention: Vec<Var>,
}

impl AttentionBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        ffn_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(heads >= 1 && dim % heads == 0, "channel count {dim} not divisible by {heads} heads");
        Self {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), dim),
            query: Linear::new(store, &format!("{name}.query"), dim, dim, true, Init::Glorot, rng),
            key: Linear::new(store, &format!("{name}.key"), dim, dim, true, Init::Glorot, rng),
            value: Linear::new(store, &format!("{name}.value"), dim, dim, true, Init::Glorot, rng),
            out: Linear::new(store, &format!("{name}.out"), dim, dim, true, Init::Glorot, rng),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), dim),
            ff1: Linear::new(store, &format!("{name}.ff1"), dim, ffn_dim, true, Init::Glorot, rng),
            ff2: Linear::new(store, &format!("{name}.ff2"), ffn_dim, dim, true, Init::Glorot, rng),
            heads,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> AttentionOutput {
        let dim = g.shape(x).0;
        let head_dim = dim / self.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();

        let h = self.norm1.forward(g, x);
        let q = self.query.forward(g, h);
        let k = self.key.forward(g, h);
        let v = self.value.forward(g, h);

        let mut attention = Vec::with_capacity(self.heads);
        let mut head_outputs = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let (s, e) = (head * head_dim, (head + 1) * head_dim);
            let qh = g.slice_rows(q, s, e);
            let kh = g.slice_rows(k, s, e);
            let vh = g.slice_rows(v, s, e);
            let qt = g.transpose(qh);
            let scores = g.matmul(qt, kh);
            let scores = g.scale(scores, scale);
            let weights = g.softmax_rows(scores);
            let wt = g.transpose(weights);
            head_outputs.push(g.matmul(vh, wt));
            attention.push(weights);
        }
        let merged = if head_outputs.len() == 1 {
            head_outputs[0]
        } else {
            g.concat_rows(&head_outputs)
        };
        let projected = self.out.forward(g, merged);
        let x1 = g.add(x, projected);

        let h2 = self.norm2.forward(g, x1);
        let f = self.ff1.forward(g, h2);
        let f = g.gelu(f);
        let f = self.ff2.forward(g, f);
        let output = g.add(x1, f);
        AttentionOutput { output, attention }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Matrix> = store
            .ids()
            .map(|id| {
                let v = store.value(id);
                Matrix::zeros(v.rows(), v.cols())
            })
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Applies one update. `grads` is indexed like the store; parameters
    /// without a gradient are treated as having a zero gradient.
    pub fn update(&mut self, store: &mut ParamStore, grads: &[Option<Matrix>]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for id in store.ids().collect::<Vec<_>>() {
            let i = id.index();
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            let p = store.value_mut(id);
            let g = grads.get(i).and_then(Option::as_ref);
            for k in 0..p.len() {
                let gk = g.map_or(0.0, |g| g.as_slice()[k]);
                let mk = &mut m.as_mut_slice()[k];
                let vk = &mut v.as_mut_slice()[k];
                *mk = self.beta1 * *mk + (1.0 - self.beta1) * gk;
                *vk = self.beta2 * *vk + (1.0 - self.beta2) * gk * gk;
                let step = self.lr * (*mk / c1) / ((*vk / c2).sqrt() + self.eps);
                p.as_mut_slice()[k] -= step;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn attention_rows_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let block = AttentionBlock::new(&mut store, "blk", 8, 2, 16, &mut rng);
        let mut g = Graph::with_params(&store);
        let x = g.input(glorot(8, 5, &mut rng));
        let out = block.forward(&mut g, x);
        assert_eq!(g.shape(out.output), (8, 5));
        for &a in &out.attention {
            let w = g.value(a);
            for r in 0..w.rows() {
                assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adam_with_zero_lr_leaves_parameters_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        Linear::new(&mut store, "l", 3, 2, true, Init::Glorot, &mut rng);
        let before = store.clone();
        let mut adam = Adam::new(&store, 0.0);
        let grads = vec![Some(Matrix::filled(2, 3, 1.0)), Some(Matrix::filled(2, 1, -1.0))];
        adam.update(&mut store, &grads);
        assert_eq!(store, before);
        assert_eq!(store.digest(), before.digest());
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut store = ParamStore::new();
        let id = store.add("p", Matrix::from_vec(1, 2, vec![1.0, -1.0]));
        let mut adam = Adam::new(&store, 0.1);
        adam.update(&mut store, &[Some(Matrix::from_vec(1, 2, vec![2.0, -3.0]))]);
        let v = store.value(id);
        assert!((v[(0, 0)] - 0.9).abs() < 1e-6);
        assert!((v[(0, 1)] + 0.9).abs() < 1e-6);
    }
}
