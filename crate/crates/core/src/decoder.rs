//! Splitting the joint sequences, class logits, feature propagation back to
//! every input point, and the heatmap head.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::arm::AffordanceFeature;
use crate::backbones::{squared_distance, Point3, PointFeatureSeq, PointHierarchy};
use crate::error::{arg_err, IagError, Result};
use crate::graph::{ColumnMix, Graph, Var};
use crate::jra::JointFeature;
use crate::nn::{Init, Linear, ParamStore, PointwiseMlp};
use crate::tensor::Matrix;

/// Neighbours used by inverse-distance interpolation.
pub const INTERP_K: usize = 3;
const INTERP_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug)]
pub struct SplitFeatures {
    pub f_p_hat: Var,
    pub f_i_hat: Var,
    pub f_p_alpha: Var,
    pub f_i_alpha: Var,
}

pub fn split_features(g: &mut Graph, joint: &JointFeature, affordance: &AffordanceFeature) -> Result<SplitFeatures> {
    if joint.split_index != affordance.split_index {
        return Err(IagError::Invariant(format!(
            "split index {} of the joint sequence differs from {} of the affordance sequence",
            joint.split_index, affordance.split_index
        )));
    }
    let (jl, al) = (g.shape(joint.values).1, g.shape(affordance.values).1);
    let s = joint.split_index;
    if jl != al || s > jl {
        return Err(IagError::Invariant(format!(
            "sequence lengths {jl} / {al} cannot be split at {s}"
        )));
    }
    Ok(SplitFeatures {
        f_p_hat: g.slice_cols(joint.values, 0, s),
        f_i_hat: g.slice_cols(joint.values, s, jl),
        f_p_alpha: g.slice_cols(affordance.values, 0, s),
        f_i_alpha: g.slice_cols(affordance.values, s, al),
    })
}

/// Inverse-square-distance weights from the `k` nearest `source` points to
/// each `target` point (ties to the lower source index).
pub fn interpolation_mix(source: &[Point3], target: &[Point3], k: usize) -> Result<ColumnMix> {
    if source.is_empty() {
        return arg_err("cannot interpolate from an empty point set");
    }
    let k = k.min(source.len()).max(1);
    let entries = target
        .iter()
        .map(|t| {
            let mut d: Vec<(f64, usize)> = source
                .iter()
                .enumerate()
                .map(|(i, s)| (squared_distance(s, t), i))
                .collect();
            d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(k);
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let w: Vec<f64> = d.iter().map(|(dd, _)| 1.0 / (dd + INTERP_EPS)).collect();
            let total: f64 = w.iter().sum();
            d.iter().zip(w).map(|(&(_, i), wi)| (i, wi / total)).collect()
        })
        .collect();
    Ok(ColumnMix {
        input_cols: source.len(),
        entries,
    })
}

fn coords_matrix(points: &[Point3]) -> Matrix {
    Matrix::from_fn(3, points.len(), |d, i| points[i][d])
}

#[derive(Clone, Debug)]
pub struct Decoder {
    pub classifier: Linear,
    /// Propagation MLPs, deepest level first.
    pub propagation: Vec<PointwiseMlp>,
    /// Two-layer pointwise map `C -> C/2 -> 1`.
    pub head: PointwiseMlp,
}

impl Decoder {
    /// `level_channels[l]` is the width of set-abstraction level `l`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        num_classes: usize,
        level_channels: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let classifier = Linear::new(store, &format!("{name}.classifier"), 2 * dim, num_classes, true, Init::Glorot, rng);
        let levels = level_channels.len();
        let propagation = (0..levels)
            .rev()
            .map(|l| {
                // level l receives the skip features of the level above the input
                let skip = if l == 0 { 3 } else { level_channels[l - 1] };
                PointwiseMlp::new(store, &format!("{name}.fp{l}"), dim + skip, &[dim, dim], true, rng)
            })
            .collect();
        let head = PointwiseMlp::new(store, &format!("{name}.head"), dim, &[(dim / 2).max(1), 1], false, rng);
        Self {
            classifier,
            propagation,
            head,
        }
    }

    /// Mean-pool both affordance sequences, concatenate, linear head.
    pub fn classify_affordance(&self, g: &mut Graph, f_p_alpha: Var, f_i_alpha: Var) -> Result<Var> {
        if g.shape(f_p_alpha).0 != g.shape(f_i_alpha).0 {
            return arg_err("affordance sequences differ in channel count");
        }
        let a = g.mean_cols(f_p_alpha);
        let b = g.mean_cols(f_i_alpha);
        let pooled = g.concat_rows(&[a, b]);
        Ok(self.classifier.forward(g, pooled))
    }

    /// Upsamples `f_p_hat` (at the deepest centres) to every input point.
    pub fn propagate_features(
        &self,
        g: &mut Graph,
        f_p_hat: Var,
        hierarchy: &PointHierarchy,
        encoded: &PointFeatureSeq,
    ) -> Result<Var> {
        let levels = hierarchy.levels.len();
        if levels == 0 || self.propagation.len() != levels || encoded.levels.len() != levels {
            return arg_err("feature propagation needs the full encoder hierarchy");
        }
        let mut x = f_p_hat;
        for (step, mlp) in self.propagation.iter().enumerate() {
            let l = levels - 1 - step;
            let mix = interpolation_mix(hierarchy.coords(l + 1), hierarchy.coords(l), INTERP_K)?;
            let up = g.mix_cols(x, Arc::new(mix));
            let skip = if l == 0 {
                g.input(coords_matrix(&hierarchy.input))
            } else {
                encoded.levels[l - 1]
            };
            let cat = g.concat_rows(&[up, skip]);
            x = mlp.forward(g, cat);
        }
        Ok(x)
    }

    /// `sigmoid(head(upsampled * broadcast(mean(F_p_alpha))))` as a `1 x N` row.
    pub fn predict_heatmap(&self, g: &mut Graph, upsampled: Var, f_p_alpha: Var) -> Result<Var> {
        if g.shape(upsampled).0 != g.shape(f_p_alpha).0 {
            return arg_err("upsampled features and affordance sequence differ in width");
        }
        let gamma = g.mean_cols(f_p_alpha);
        let gated = g.mul_column(upsampled, gamma);
        let score = self.head.forward(g, gated);
        Ok(g.sigmoid(score))
    }
}
