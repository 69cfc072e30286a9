//! Classification, region-distribution and heatmap losses and their
//! weighted total.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, IagError, Result};
use crate::graph::{focal_term, softmax_in_place, FocalParams, Graph, Var};
use crate::tensor::Matrix;

/// Named loss weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_hm: f64,
    pub lambda_ce: f64,
    pub lambda_kl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_hm: 1.0,
            lambda_ce: 0.3,
            lambda_kl: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub lambda_hm: f64,
    pub lambda_ce: f64,
    pub lambda_kl: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    pub eps_kl: f64,
    pub dice_smooth: f64,
    /// Predictions are clamped to `[clamp, 1 - clamp]` inside the focal term.
    pub clamp: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            lambda_hm: w.lambda_hm,
            lambda_ce: w.lambda_ce,
            lambda_kl: w.lambda_kl,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            eps_kl: 1e-12,
            dice_smooth: 1e-6,
            clamp: 1e-7,
        }
    }
}

impl LossConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_hm: self.lambda_hm,
            lambda_ce: self.lambda_ce,
            lambda_kl: self.lambda_kl,
        }
    }

    pub fn focal(&self) -> FocalParams {
        FocalParams {
            gamma: self.focal_gamma,
            alpha: self.focal_alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.lambda_hm, self.lambda_ce, self.lambda_kl];
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(IagError::Config(format!("loss weights must be finite and >= 0, got {w:?}")));
        }
        if !(self.eps_kl > 0.0) || !(self.focal_gamma >= 0.0) || !(0.0..=1.0).contains(&self.focal_alpha) {
            return Err(IagError::Config("need eps_kl > 0, focal_gamma >= 0 and focal_alpha in [0, 1]".into()));
        }
        if !(self.dice_smooth >= 0.0) || !(0.0..0.5).contains(&self.clamp) {
            return Err(IagError::Config("need dice_smooth >= 0 and clamp in [0, 0.5)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ce: f64,
    pub l_kl: f64,
    pub l_hm: f64,
    pub total: f64,
    pub weights: LossWeights,
}

pub fn total_loss(l_ce: f64, l_kl: f64, l_hm: f64, weights: LossWeights) -> LossBreakdown {
    LossBreakdown {
        l_ce,
        l_kl,
        l_hm,
        total: weights.lambda_hm * l_hm + weights.lambda_ce * l_ce + weights.lambda_kl * l_kl,
        weights,
    }
}

pub fn ce_loss(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return arg_err(format!("label {label} out of range for {} classes", logits.len()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[label])
}

/// Channel mean of a `C x N_i` tensor, softmax over the regions.
pub fn region_distribution(x: &Matrix) -> Vec<f64> {
    let mut d: Vec<f64> = (0..x.cols())
        .map(|c| (0..x.rows()).map(|r| x[(r, c)]).sum::<f64>() / x.rows() as f64)
        .collect();
    softmax_in_place(&mut d);
    d
}

/// `sum_n q_n ln(eps + q_n / (eps + p_n))` over region distributions.
pub fn kl_divergence(q: &[f64], p: &[f64], eps: f64) -> f64 {
    q.iter().zip(p).map(|(&qn, &pn)| qn * (eps + qn / (eps + pn)).ln()).sum()
}

pub fn kl_loss(f_i_alpha: &Matrix, f_i_hat: &Matrix, eps: f64) -> Result<f64> {
    if f_i_alpha.shape() != f_i_hat.shape() {
        return arg_err(format!("shape mismatch {:?} vs {:?}", f_i_alpha.shape(), f_i_hat.shape()));
    }
    if !f_i_alpha.is_finite() || !f_i_hat.is_finite() {
        return Err(IagError::Numeric("non-finite input to the KL loss".into()));
    }
    if !(eps > 0.0) {
        return arg_err("eps must be positive");
    }
    Ok(kl_divergence(&region_distribution(f_i_alpha), &region_distribution(f_i_hat), eps))
}

fn check_unit(values: &[f64], what: &str) -> Result<()> {
    match values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => arg_err(format!("{what} value {v} outside [0, 1]")),
        None => Ok(()),
    }
}

/// Mean focal term over points (soft targets weight the two class terms).
pub fn focal_loss(heatmap: &[f64], target: &[f64], config: &LossConfig) -> f64 {
    let params = config.focal();
    heatmap
        .iter()
        .zip(target)
        .map(|(&p, &t)| focal_term(p.clamp(config.clamp, 1.0 - config.clamp), t, params).0)
        .sum::<f64>()
        / heatmap.len() as f64
}

pub fn dice_loss(heatmap: &[f64], target: &[f64], smooth: f64) -> f64 {
    let inter: f64 = heatmap.iter().zip(target).map(|(p, t)| p * t).sum();
    let (sp, st): (f64, f64) = (heatmap.iter().sum(), target.iter().sum());
    1.0 - (2.0 * inter + smooth) / (sp + st + smooth)
}

/// Mean focal term plus soft dice, equal weights.
pub fn focal_dice_loss(heatmap: &[f64], target: &[f64], config: &LossConfig) -> Result<f64> {
    if heatmap.len() != target.len() || heatmap.is_empty() {
        return arg_err("heatmap and target must be non-empty and equally long");
    }
    check_unit(heatmap, "heatmap")?;
    check_unit(target, "target")?;
    Ok(focal_loss(heatmap, target, config) + dice_loss(heatmap, target, config.dice_smooth))
}

/// Loss terms on the tape.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub l_ce: Var,
    pub l_kl: Var,
    pub l_hm: Var,
    pub total: Var,
}

impl LossVars {
    pub fn breakdown(&self, g: &Graph, weights: LossWeights) -> LossBreakdown {
        LossBreakdown {
            l_ce: g.value(self.l_ce).item(),
            l_kl: g.value(self.l_kl).item(),
            l_hm: g.value(self.l_hm).item(),
            total: g.value(self.total).item(),
            weights,
        }
    }
}

pub fn ce_var(g: &mut Graph, logits: Var, label: usize) -> Result<Var> {
    let k = g.value(logits).len();
    if label >= k {
        return arg_err(format!("label {label} out of range for {k} classes"));
    }
    Ok(g.cross_entropy(logits, label))
}

pub fn kl_var(g: &mut Graph, f_i_alpha: Var, f_i_hat: Var, eps: f64) -> Result<Var> {
    if g.shape(f_i_alpha) != g.shape(f_i_hat) {
        return arg_err("KL inputs differ in shape");
    }
    let q = g.mean_rows(f_i_alpha);
    let q = g.softmax_rows(q);
    let p = g.mean_rows(f_i_hat);
    let p = g.softmax_rows(p);
    Ok(g.kl_eps(q, p, eps))
}

pub fn focal_dice_var(g: &mut Graph, heatmap: Var, target: &Arc<Matrix>, config: &LossConfig) -> Result<Var> {
    if g.shape(heatmap) != target.shape() {
        return arg_err(format!("heatmap {:?} vs target {:?}", g.shape(heatmap), target.shape()));
    }
    check_unit(target.as_slice(), "target")?;
    let f = g.focal(heatmap, Arc::clone(target), config.focal(), config.clamp);
    let d = g.dice(heatmap, Arc::clone(target), config.dice_smooth);
    Ok(g.add(f, d))
}

/// Weighted sum of the three terms on the tape.
pub fn total_var(g: &mut Graph, l_ce: Var, l_kl: Var, l_hm: Var, weights: LossWeights) -> LossVars {
    let a = g.scale(l_hm, weights.lambda_hm);
    let b = g.scale(l_ce, weights.lambda_ce);
    let c = g.scale(l_kl, weights.lambda_kl);
    let ab = g.add(a, b);
    let total = g.add(ab, c);
    LossVars { l_ce, l_kl, l_hm, total }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_reference_values() {
        assert!((ce_loss(&[0.0; 17], 4).unwrap() - 17f64.ln()).abs() < 1e-12);
        assert!((ce_loss(&[0.0, 0.0], 0).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(ce_loss(&[1e6, 0.0, 0.0], 0).unwrap() < 1e-9);
        assert!(ce_loss(&[0.0], 1).is_err());
    }

    #[test]
    fn kl_reference_value() {
        let v = kl_divergence(&[0.75, 0.25], &[0.5, 0.5], 1e-15);
        assert!((v - (0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln())).abs() < 1e-9);
        assert!(kl_divergence(&[1.0, 0.0], &[0.0, 1.0], 1e-12).is_finite());
    }

    #[test]
    fn identical_regions_have_no_divergence() {
        let x = Matrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64 * 0.1);
        assert!(kl_loss(&x, &x, 1e-12).unwrap().abs() <= 1e-6);
        let bad = Matrix::filled(4, 3, f64::NAN);
        assert!(matches!(kl_loss(&bad, &x, 1e-12), Err(IagError::Numeric(_))));
    }

    #[test]
    fn perfect_heatmap_costs_nothing() {
        let t = [1.0f64, 0.0, 0.0, 1.0, 1.0];
        let h: Vec<f64> = t.iter().map(|v: &f64| v.clamp(1e-6, 1.0 - 1e-6)).collect();
        assert!(focal_dice_loss(&h, &t, &LossConfig::default()).unwrap() <= 1e-4);
    }

    #[test]
    fn inverted_heatmap_has_full_dice() {
        let t = [1.0, 0.0, 1.0, 0.0];
        let h: Vec<f64> = t.iter().map(|v| 1.0 - v).collect();
        assert!((dice_loss(&h, &t, 1e-6) - 1.0).abs() < 1e-6);
        assert!(focal_dice_loss(&[1.5], &[1.0], &LossConfig::default()).is_err());
    }

    #[test]
    fn focal_without_focusing_is_weighted_bce() {
        let cfg = LossConfig {
            focal_gamma: 0.0,
            focal_alpha: 0.5,
            ..LossConfig::default()
        };
        let (h, t) = ([0.2, 0.7, 0.9, 0.4], [1.0, 0.0, 1.0, 0.0]);
        let bce: f64 = h
            .iter()
            .zip(&t)
            .map(|(p, y): (&f64, &f64)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
            .sum::<f64>()
            / 4.0;
        assert!((focal_loss(&h, &t, &cfg) - 0.5 * bce).abs() < 1e-12);
    }

    #[test]
    fn focal_is_non_increasing_in_confidence() {
        let cfg = LossConfig::default();
        let values: Vec<f64> = (1..=10).map(|i| focal_loss(&[i as f64 / 10.5], &[1.0], &cfg)).collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn weighted_total_is_linear() {
        let b = total_loss(1.0, 1.0, 1.0, LossWeights::default());
        assert!((b.total - 1.8).abs() < 1e-15);
        assert_eq!(total_loss(0.0, 0.0, 0.0, LossWeights::default()).total, 0.0);
    }
}
