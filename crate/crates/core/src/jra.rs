//! Joint region alignment: shared projection, dense cross-similarity,
//! structural self-attention and joint attention over both modalities.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::graph::{Graph, Var};
use crate::nn::{AttentionBlock, Init, Linear, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttentionConfig {
    pub heads: usize,
    /// Feed-forward width as a multiple of the channel count.
    pub ffn_mult: usize,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self { heads: 4, ffn_mult: 2 }
    }
}

/// `C x (N_p + N_i)` sequence whose first `split_index` columns are point
/// regions and the rest image regions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JointFeature {
    pub values: Var,
    pub split_index: usize,
}

#[derive(Clone, Debug)]
pub struct Jra {
    pub shared: Linear,
    pub f_p: AttentionBlock,
    pub f_i: AttentionBlock,
    pub f_delta: AttentionBlock,
}

/// Every intermediate of one alignment pass.
#[derive(Clone, Debug)]
pub struct JraTrace {
    pub p: Var,
    pub i: Var,
    pub phi: Var,
    pub p_bar: Var,
    pub i_bar: Var,
    pub joint: JointFeature,
    /// Row-stochastic attention maps of f_p, f_i and f_delta (all heads).
    pub attention: Vec<Var>,
}

impl Jra {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        dim: usize,
        attn: &AttentionConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let ffn = attn.ffn_mult * dim;
        Self {
            shared: Linear::new(store, &format!("{name}.shared"), in_dim, dim, true, Init::Glorot, rng),
            f_p: AttentionBlock::new(store, &format!("{name}.f_p"), dim, attn.heads, ffn, rng),
            f_i: AttentionBlock::new(store, &format!("{name}.f_i"), dim, attn.heads, ffn, rng),
            f_delta: AttentionBlock::new(store, &format!("{name}.f_delta"), dim, attn.heads, ffn, rng),
        }
    }

    /// The same pointwise map applied to both region sequences.
    pub fn project_shared(&self, g: &mut Graph, f_p: Var, f_i: Var) -> Result<(Var, Var)> {
        let (cp, ci) = (g.shape(f_p).0, g.shape(f_i).0);
        if cp != ci || cp != self.shared.in_dim {
            return arg_err(format!(
                "region channels differ: points {cp}, image {ci}, projection expects {}",
                self.shared.in_dim
            ));
        }
        Ok((self.shared.forward(g, f_p), self.shared.forward(g, f_i)))
    }

    pub fn structural_attend(&self, g: &mut Graph, p: Var, i: Var, phi: Var) -> (Var, Var, Vec<Var>) {
        let phi_t = g.transpose(phi);
        let from_image = g.matmul(i, phi_t);
        let from_points = g.matmul(p, phi);
        let pb = self.f_p.forward(g, from_image);
        let ib = self.f_i.forward(g, from_points);
        let mut attention = pb.attention;
        attention.extend(ib.attention);
        (pb.output, ib.output, attention)
    }

    pub fn joint_align(&self, g: &mut Graph, p_bar: Var, i_bar: Var) -> Result<(JointFeature, Vec<Var>)> {
        if g.shape(p_bar).0 != g.shape(i_bar).0 {
            return arg_err("aligned sequences differ in channel count");
        }
        let split_index = g.shape(p_bar).1;
        let cat = g.concat_cols(&[p_bar, i_bar]);
        let out = self.f_delta.forward(g, cat);
        Ok((
            JointFeature {
                values: out.output,
                split_index,
            },
            out.attention,
        ))
    }

    pub fn forward(&self, g: &mut Graph, f_p: Var, f_i: Var) -> Result<JraTrace> {
        let (p, i) = self.project_shared(g, f_p, f_i)?;
        let phi = cross_similarity(g, p, i)?;
        let (p_bar, i_bar, mut attention) = self.structural_attend(g, p, i, phi);
        let (joint, joint_attn) = self.joint_align(g, p_bar, i_bar)?;
        attention.extend(joint_attn);
        Ok(JraTrace {
            p,
            i,
            phi,
            p_bar,
            i_bar,
            joint,
            attention,
        })
    }
}

/// `phi = softmax(P^T I / sqrt(C))` normalised over the whole matrix.
pub fn cross_similarity(g: &mut Graph, p: Var, i: Var) -> Result<Var> {
    let c = g.shape(p).0;
    if c != g.shape(i).0 {
        return arg_err("cross-similarity inputs differ in channel count");
    }
    let pt = g.transpose(p);
    let scores = g.matmul(pt, i);
    let scores = g.scale(scores, 1.0 / (c as f64).sqrt());
    Ok(g.softmax_all(scores))
}
