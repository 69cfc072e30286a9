//! Affordance revealing: two cross-attentions sharing one query over the
//! joint sequence, fused back to the model width.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, IagError, Result};
use crate::graph::{Graph, Var};
use crate::jra::JointFeature;
use crate::nn::{Init, Linear, ParamStore};

/// Which context sequence feeds the keys and values of each branch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionVariant {
    /// Branch 1 keys and values from the subject, branch 2 from the scene.
    #[default]
    Figure,
    /// Keys from the subject and values from the scene in both branches.
    Literal,
}

impl fmt::Display for ProjectionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProjectionVariant::Figure => "figure",
            ProjectionVariant::Literal => "literal",
        })
    }
}

impl FromStr for ProjectionVariant {
    type Err = IagError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "figure" => Ok(ProjectionVariant::Figure),
            "literal" => Ok(ProjectionVariant::Literal),
            other => Err(IagError::Config(format!(
                "unknown projection variant `{other}` (expected figure or literal)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AffordanceFeature {
    pub values: Var,
    pub split_index: usize,
}

#[derive(Clone, Debug)]
pub struct Arm {
    pub w_q: Linear,
    pub w_k1: Linear,
    pub w_k2: Linear,
    pub w_v1: Linear,
    pub w_v2: Linear,
    pub fuse: Linear,
    pub variant: ProjectionVariant,
}

#[derive(Clone, Copy, Debug)]
pub struct ArmTrace {
    pub q: Var,
    pub theta1: Var,
    pub theta2: Var,
    /// `L x N_i` row-stochastic weights of each branch.
    pub attn1: Var,
    pub attn2: Var,
    pub affordance: AffordanceFeature,
}

/// `V softmax_rows(Q^T K / sqrt(d))^T`, returning the context and weights.
pub fn cross_attend(g: &mut Graph, q: Var, k: Var, v: Var) -> (Var, Var) {
    let d = g.shape(q).0;
    let qt = g.transpose(q);
    let scores = g.matmul(qt, k);
    let scores = g.scale(scores, 1.0 / (d as f64).sqrt());
    let weights = g.softmax_rows(scores);
    let wt = g.transpose(weights);
    (g.matmul(v, wt), weights)
}

impl Arm {
    /// `dim` is the joint width, `context_dim` the width of the subject and
    /// scene region features.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        context_dim: usize,
        variant: ProjectionVariant,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut proj = |suffix: &str, in_dim: usize, rng: &mut ChaCha8Rng| {
            Linear::new(store, &format!("{name}.{suffix}"), in_dim, dim, false, Init::Glorot, rng)
        };
        let w_q = proj("w_q", dim, rng);
        let w_k1 = proj("w_k1", context_dim, rng);
        let w_k2 = proj("w_k2", context_dim, rng);
        let w_v1 = proj("w_v1", context_dim, rng);
        let w_v2 = proj("w_v2", context_dim, rng);
        let fuse = Linear::new(store, &format!("{name}.fuse"), 2 * dim, dim, true, Init::Glorot, rng);
        Self {
            w_q,
            w_k1,
            w_k2,
            w_v1,
            w_v2,
            fuse,
            variant,
        }
    }

    pub fn reveal_affordance(&self, g: &mut Graph, joint: &JointFeature, f_sub: Var, f_sce: Var) -> Result<ArmTrace> {
        let (c, ctx) = (self.w_q.in_dim, self.w_k1.in_dim);
        let (jc, len) = g.shape(joint.values);
        let (sub, sce) = (g.shape(f_sub), g.shape(f_sce));
        if jc != c || sub.0 != ctx || sub != sce {
            return arg_err(format!(
                "interaction inputs do not match widths {c}/{ctx}: joint {jc}x{len}, subject {sub:?}, scene {sce:?}"
            ));
        }
        if joint.split_index > len {
            return arg_err("split index beyond the joint sequence");
        }
        let q = self.w_q.forward(g, joint.values);
        let (k1, v1, k2, v2) = match self.variant {
            ProjectionVariant::Figure => (
                self.w_k1.forward(g, f_sub),
                self.w_v1.forward(g, f_sub),
                self.w_k2.forward(g, f_sce),
                self.w_v2.forward(g, f_sce),
            ),
            ProjectionVariant::Literal => (
                self.w_k1.forward(g, f_sub),
                self.w_v1.forward(g, f_sce),
                self.w_k2.forward(g, f_sub),
                self.w_v2.forward(g, f_sce),
            ),
        };
        let (theta1, attn1) = cross_attend(g, q, k1, v1);
        let (theta2, attn2) = cross_attend(g, q, k2, v2);
        let cat = g.concat_rows(&[theta1, theta2]);
        let fused = self.fuse.forward(g, cat);
        Ok(ArmTrace {
            q,
            theta1,
            theta2,
            attn1,
            attn2,
            affordance: AffordanceFeature {
                values: fused,
                split_index: joint.split_index,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;
    use rand::{Rng, SeedableRng};

    #[test]
    fn equal_value_columns_fix_the_context() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut g = Graph::new();
        let q = g.input(Matrix::from_fn(3, 5, |_, _| rng.gen_range(-2.0..2.0)));
        let k = g.input(Matrix::from_fn(3, 4, |_, _| rng.gen_range(-2.0..2.0)));
        let v = g.input(Matrix::from_fn(3, 4, |r, _| r as f64 - 0.5));
        let (theta, w) = cross_attend(&mut g, q, k, v);
        let t = g.value(theta);
        for c in 0..5 {
            for r in 0..3 {
                assert!((t[(r, c)] - (r as f64 - 0.5)).abs() < 1e-12);
            }
        }
        for r in 0..5 {
            assert!((g.value(w).row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn variants_differ_and_keep_the_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let fig = Arm::new(&mut store, "arm", 4, 4, ProjectionVariant::Figure, &mut rng);
        let lit = Arm {
            variant: ProjectionVariant::Literal,
            ..fig.clone()
        };
        let mut g = Graph::with_params(&store);
        let j = g.input(Matrix::from_fn(4, 6, |_, _| rng.gen_range(-1.0..1.0)));
        let sub = g.input(Matrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0)));
        let sce = g.input(Matrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0)));
        let joint = JointFeature {
            values: j,
            split_index: 4,
        };
        let a = fig.reveal_affordance(&mut g, &joint, sub, sce).unwrap();
        let b = lit.reveal_affordance(&mut g, &joint, sub, sce).unwrap();
        assert_eq!(a.affordance.split_index, 4);
        assert_eq!(g.shape(a.affordance.values), (4, 6));
        assert_ne!(g.value(a.affordance.values), g.value(b.affordance.values));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [ProjectionVariant::Figure, ProjectionVariant::Literal] {
            assert_eq!(v.to_string().parse::<ProjectionVariant>().unwrap(), v);
        }
        assert!("both".parse::<ProjectionVariant>().is_err());
    }
}
