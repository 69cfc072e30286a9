//! Brute-force references for the metrics, farthest point sampling and
//! analytic gradients, plus the normalisation checks. Everything here is
//! deliberately slow and obvious.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::arm::{cross_attend, AffordanceFeature, Arm, ProjectionVariant};
use crate::backbones::{build_hierarchy, squared_distance, ImageEncoder, Point3, PointEncoder, PointFeatureSeq, StartRule};
use crate::data::BBox;
use crate::decoder::{interpolation_mix, split_features, Decoder};
use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::jra::{cross_similarity, AttentionConfig, Jra, JointFeature};
use crate::losses::{ce_var, focal_dice_var, kl_loss, kl_var, LossConfig};
use crate::metrics::{self, GT_THRESHOLD};
use crate::model::{ModelConfig, ModelInput, Network};
use crate::nn::ParamStore;
use crate::tensor::Matrix;

/// Outcome of one comparison family.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Cases left out of the comparison (gradient entries straddling a kink).
    pub excluded: usize,
    pub seconds: f64,
}

impl OracleCheck {
    fn new(name: &str, cases: usize, max_error: f64, tolerance: f64, started: Instant) -> Self {
        Self {
            name: name.to_string(),
            cases,
            max_error,
            tolerance,
            passed: max_error <= tolerance,
            excluded: 0,
            seconds: started.elapsed().as_secs_f64(),
        }
    }
}

impl fmt::Display for OracleCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} cases {:>5}  max err {:.3e}  tol {:.1e}  {:.2}s",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.max_error,
            self.tolerance,
            self.seconds
        )?;
        if self.excluded > 0 {
            write!(f, "  ({} at kinks)", self.excluded)?;
        }
        Ok(())
    }
}

/// AUC as the fraction of (positive, negative) pairs ranked correctly,
/// ties counting one half.
pub fn auc_pairwise(pred: &[f64], gt: &[f64]) -> Option<f64> {
    let pos: Vec<f64> = pred.iter().zip(gt).filter(|(_, &g)| g >= GT_THRESHOLD).map(|(&p, _)| p).collect();
    let neg: Vec<f64> = pred.iter().zip(gt).filter(|(_, &g)| g < GT_THRESHOLD).map(|(&p, _)| p).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// IoU between index sets, averaged over the 19 prediction thresholds.
pub fn aiou_direct(pred: &[f64], gt: &[f64]) -> f64 {
    let truth: Vec<usize> = (0..gt.len()).filter(|&i| gt[i] >= GT_THRESHOLD).collect();
    let mut sum = 0.0;
    for k in 1..=19 {
        let thr = k as f64 / 20.0;
        let predicted: Vec<usize> = (0..pred.len()).filter(|&i| pred[i] >= thr).collect();
        let inter = predicted.iter().filter(|i| truth.contains(i)).count();
        let union = predicted.len() + truth.len() - inter;
        sum += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    }
    sum / 19.0
}

pub fn sim_direct(pred: &[f64], gt: &[f64]) -> f64 {
    let sp: f64 = pred.iter().sum();
    let sg: f64 = gt.iter().sum();
    if sp == 0.0 && sg == 0.0 {
        return 1.0;
    }
    if sp == 0.0 || sg == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..pred.len() {
        total += f64::min(pred[i] / sp, gt[i] / sg);
    }
    total
}

pub fn mae_direct(pred: &[f64], gt: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..pred.len() {
        total += (pred[i] - gt[i]).abs();
    }
    total / pred.len() as f64
}

/// Greedy farthest point sampling recomputing every minimum distance from
/// scratch. Ties go to the lowest index, as does the start point (farthest
/// from the centroid).
pub fn fps_exhaustive(coords: &[Point3], k: usize) -> Vec<usize> {
    let n = coords.len() as f64;
    let c = [0, 1, 2].map(|d| coords.iter().map(|p| p[d]).sum::<f64>() / n);
    let mut first = 0;
    for i in 1..coords.len() {
        if squared_distance(&coords[i], &c) > squared_distance(&coords[first], &c) {
            first = i;
        }
    }
    let mut chosen = vec![first];
    while chosen.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..coords.len() {
            if chosen.contains(&i) {
                continue;
            }
            let d = chosen
                .iter()
                .map(|&j| squared_distance(&coords[i], &coords[j]))
                .fold(f64::INFINITY, f64::min);
            if best.map_or(true, |(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        chosen.push(best.expect("enough points").0);
    }
    chosen
}

fn random_map(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    match rng.gen_range(0..4) {
        // coarse levels force ties
        0 => (0..n).map(|_| rng.gen_range(0..5) as f64 / 4.0).collect(),
        1 => (0..n).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen() }).collect(),
        2 => vec![0.0; n],
        _ => (0..n).map(|_| rng.gen()).collect(),
    }
}

/// AUC must agree exactly; aIoU, SIM and MAE within `1e-9`.
pub fn check_metrics(cases: usize, seed: u64) -> Result<Vec<OracleCheck>> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut auc_err, mut aiou_err, mut sim_err, mut mae_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for case in 0..cases {
        let n = rng.gen_range(1..=50);
        let pred = if case % 7 == 0 { vec![0.0; n] } else { random_map(&mut rng, n) };
        let gt = random_map(&mut rng, n);
        let fast = metrics::auc(&pred, &gt)?;
        let slow = auc_pairwise(&pred, &gt);
        auc_err = auc_err.max(match (fast, slow) {
            (None, None) => 0.0,
            (Some(a), Some(b)) if a == b => 0.0,
            (Some(a), Some(b)) => (a - b).abs().max(f64::MIN_POSITIVE),
            _ => f64::INFINITY,
        });
        aiou_err = aiou_err.max((metrics::aiou(&pred, &gt)? - aiou_direct(&pred, &gt)).abs());
        sim_err = sim_err.max((metrics::sim(&pred, &gt)? - sim_direct(&pred, &gt)).abs());
        mae_err = mae_err.max((metrics::mae(&pred, &gt)? - mae_direct(&pred, &gt)).abs());
    }
    Ok(vec![
        OracleCheck::new("metrics/auc (exact)", cases, auc_err, 0.0, started),
        OracleCheck::new("metrics/aiou", cases, aiou_err, 1e-9, started),
        OracleCheck::new("metrics/sim", cases, sim_err, 1e-9, started),
        OracleCheck::new("metrics/mae", cases, mae_err, 1e-9, started),
    ])
}

/// Index sequences must be identical. The error is the number of clouds
/// that disagree.
pub fn check_fps(cases: usize, seed: u64) -> Result<OracleCheck> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0usize;
    for case in 0..cases {
        let n = rng.gen_range(1..=64);
        let coords: Vec<Point3> = if case % 4 == 0 {
            // integer lattice: many equal distances
            (0..n).map(|_| [0, 1, 2].map(|_| rng.gen_range(-2..=2) as f64)).collect()
        } else {
            (0..n).map(|_| [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0))).collect()
        };
        let k = rng.gen_range(1..=n);
        let fast = crate::backbones::farthest_point_sample(&coords, k, StartRule::FarthestFromCentroid)?;
        if fast != fps_exhaustive(&coords, k) {
            mismatches += 1;
        }
    }
    Ok(OracleCheck::new("fps/exhaustive", cases, mismatches as f64, 0.0, started))
}

/// Worst entry of a finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `tensor[index]` of the worst entry.
    pub worst: String,
    pub entries: usize,
    /// Entries whose stencil straddles a ReLU, max or clamp kink; central
    /// differences are meaningless there, so they are not compared.
    pub kinks: usize,
}

/// Largest share of straddling entries before a check counts as failed.
pub const MAX_KINK_FRACTION: f64 = 0.05;

impl GradCheck {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance && (self.kinks as f64) <= MAX_KINK_FRACTION * (self.entries + self.kinks) as f64
    }
}

/// Denominator floor: gradients below it are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the tape gradient of the scalar `build(g, inputs)` with central
/// differences for every input entry and up to `per_param` entries of each
/// parameter tensor.
pub fn finite_difference_check<F>(
    store: &ParamStore,
    inputs: &[Matrix],
    step: f64,
    per_param: usize,
    build: F,
) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |store: &ParamStore, inputs: &[Matrix]| -> Result<(f64, Vec<usize>)> {
        let mut g = Graph::with_params(store);
        let vars: Vec<Var> = inputs.iter().map(|m| g.input(m.clone())).collect();
        let out = build(&mut g, &vars)?;
        Ok((g.value(out).item(), g.branch_pattern()))
    };
    let central = |plus: (f64, Vec<usize>), minus: (f64, Vec<usize>)| {
        (plus.1 == minus.1).then(|| (plus.0 - minus.0) / (2.0 * step))
    };
    let mut g = Graph::with_params(store);
    let vars: Vec<Var> = inputs.iter().map(|m| g.input(m.clone())).collect();
    let out = build(&mut g, &vars)?;
    g.backward(out);

    let mut check = GradCheck {
        max_rel_error: 0.0,
        worst: String::new(),
        entries: 0,
        kinks: 0,
    };
    let record = |check: &mut GradCheck, name: String, analytic: f64, numeric: Option<f64>| {
        let Some(numeric) = numeric else {
            check.kinks += 1;
            return;
        };
        let e = rel_error(analytic, numeric);
        check.entries += 1;
        if e > check.max_rel_error || check.worst.is_empty() {
            check.max_rel_error = e;
            check.worst = format!("{name}: analytic {analytic:.6e} numeric {numeric:.6e}");
        }
    };

    for (t, var) in vars.iter().enumerate() {
        let grad = g.grad(*var).cloned().unwrap_or_else(|| Matrix::zeros(inputs[t].rows(), inputs[t].cols()));
        for k in 0..inputs[t].len() {
            let mut plus = inputs.to_vec();
            plus[t].as_mut_slice()[k] += step;
            let mut minus = inputs.to_vec();
            minus[t].as_mut_slice()[k] -= step;
            let numeric = central(eval(store, &plus)?, eval(store, &minus)?);
            record(&mut check, format!("input{t}[{k}]"), grad.as_slice()[k], numeric);
        }
    }
    let param_grads = g.param_grads();
    for (id, grad) in param_grads {
        let len = grad.len();
        let stride = len.div_ceil(per_param.max(1)).max(1);
        for k in (0..len).step_by(stride) {
            let mut plus = store.clone();
            plus.value_mut(id).as_mut_slice()[k] += step;
            let mut minus = store.clone();
            minus.value_mut(id).as_mut_slice()[k] -= step;
            let numeric = central(eval(&plus, inputs)?, eval(&minus, inputs)?);
            record(&mut check, format!("{}[{k}]", store.name(id)), grad.as_slice()[k], numeric);
        }
    }
    Ok(check)
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// `sum(w * x)` against a fixed random `w`, turning any output into a scalar
/// that exercises every entry.
fn probe(g: &mut Graph, x: Var, rng_seed: u64) -> Var {
    let (r, c) = g.shape(x);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let w = g.input(random(&mut rng, r, c));
    let prod = g.mul(x, w);
    g.sum_all(prod)
}

/// Finite-difference step and pass threshold of the gradient suite.
pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Gradient checks for every trainable module and each loss term at tiny
/// dimensions.
pub fn check_gradients(seed: u64) -> Result<Vec<OracleCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut push = |name: &str, started: Instant, check: GradCheck| {
        log::debug!("{name}: worst {}", check.worst);
        let mut oc = OracleCheck::new(name, check.entries, check.max_rel_error, FD_TOLERANCE, started);
        oc.passed = check.passed(FD_TOLERANCE);
        oc.excluded = check.kinks;
        out.push(oc);
    };
    let per_param = 24;
    let attn = AttentionConfig { heads: 2, ffn_mult: 2 };

    let started = Instant::now();
    let mut store = ParamStore::new();
    let jra = Jra::new(&mut store, "jra", 5, 4, &attn, &mut rng);
    let inputs = [random(&mut rng, 5, 6), random(&mut rng, 5, 4)];
    let check = finite_difference_check(&store, &inputs, FD_STEP, per_param, |g, v| {
        let t = jra.forward(g, v[0], v[1])?;
        Ok(probe(g, t.joint.values, 11))
    })?;
    push("gradient/jra", started, check);

    for variant in [ProjectionVariant::Figure, ProjectionVariant::Literal] {
        let started = Instant::now();
        let mut store = ParamStore::new();
        let arm = Arm::new(&mut store, "arm", 4, 5, variant, &mut rng);
        let inputs = [random(&mut rng, 4, 7), random(&mut rng, 5, 4), random(&mut rng, 5, 4)];
        let check = finite_difference_check(&store, &inputs, FD_STEP, per_param, |g, v| {
            let joint = JointFeature {
                values: v[0],
                split_index: 3,
            };
            let t = arm.reveal_affordance(g, &joint, v[1], v[2])?;
            Ok(probe(g, t.affordance.values, 12))
        })?;
        push(&format!("gradient/arm-{variant}"), started, check);
    }

    let started = Instant::now();
    let cfg = ModelConfig::tiny();
    let coords: Vec<Point3> = (0..cfg.point_count)
        .map(|_| [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0)))
        .collect();
    let hierarchy = build_hierarchy(&coords, &cfg.point)?;
    let (point, mut point_store) = point_encoder(&cfg, &mut rng)?;
    // zero biases put every group centre (relative offset 0) exactly on the
    // ReLU kink, where central differences are meaningless
    jitter_biases(&mut point_store, &mut rng);
    let levels: Vec<usize> = (0..cfg.point.centers.len()).map(|l| point.level_channels(l)).collect();
    let c = 4;
    let mut dec_store = ParamStore::new();
    let decoder = Decoder::new(&mut dec_store, "decoder", c, 3, &levels, &mut rng);
    // an all-zero hidden column hits the same kink one layer later
    jitter_biases(&mut dec_store, &mut rng);
    let np = cfg.point_regions();
    // encoder features enter as inputs so only the decoder is under test
    let mut inputs = vec![random(&mut rng, c, np + 4), random(&mut rng, c, np + 4)];
    inputs.extend(levels.iter().zip(&cfg.point.centers).map(|(&ch, &n)| random(&mut rng, ch, n)));
    let check = finite_difference_check(&dec_store, &inputs, FD_STEP, per_param, |g, v| {
        let joint = JointFeature {
            values: v[0],
            split_index: np,
        };
        let aff = AffordanceFeature {
            values: v[1],
            split_index: np,
        };
        let split = split_features(g, &joint, &aff)?;
        let encoded = PointFeatureSeq {
            levels: v[2..].to_vec(),
        };
        let logits = decoder.classify_affordance(g, split.f_p_alpha, split.f_i_alpha)?;
        let up = decoder.propagate_features(g, split.f_p_hat, &hierarchy, &encoded)?;
        let heat = decoder.predict_heatmap(g, up, split.f_p_alpha)?;
        let a = probe(g, logits, 13);
        let b = probe(g, heat, 14);
        Ok(g.add(a, b))
    })?;
    push("gradient/decoder", started, check);

    let started = Instant::now();
    let empty = ParamStore::new();
    let check = finite_difference_check(&empty, &[random(&mut rng, 5, 1)], FD_STEP, per_param, |g, v| {
        ce_var(g, v[0], 2)
    })?;
    push("gradient/loss-ce", started, check);

    let started = Instant::now();
    let inputs = [random(&mut rng, 4, 3), random(&mut rng, 4, 3)];
    let check = finite_difference_check(&empty, &inputs, FD_STEP, per_param, |g, v| kl_var(g, v[0], v[1], 1e-12))?;
    push("gradient/loss-kl", started, check);

    let started = Instant::now();
    let target: Vec<f64> = (0..16).map(|i| if i % 3 == 0 { 1.0 } else { rng.gen_range(0.0..0.6) }).collect();
    let target = Arc::new(Matrix::from_vec(1, 16, target));
    let loss_cfg = LossConfig::default();
    let check = finite_difference_check(&empty, &[random(&mut rng, 1, 16)], FD_STEP, per_param, |g, v| {
        let heat = g.sigmoid(v[0]);
        focal_dice_var(g, heat, &target, &loss_cfg)
    })?;
    push("gradient/loss-focal-dice", started, check);

    let started = Instant::now();
    let mut store = ParamStore::new();
    let image = ImageEncoder::new(&mut store, "image", &cfg.image, &mut rng);
    let side = 8;
    let check = finite_difference_check(&store, &[random(&mut rng, 3, side * side)], FD_STEP, per_param, |g, v| {
        let grid = image.forward(g, v[0], side, side)?;
        Ok(probe(g, grid.var, 15))
    })?;
    push("gradient/image-encoder", started, check);

    let started = Instant::now();
    let check = finite_difference_check(&point_store, &[], FD_STEP, per_param, |g, _| {
        let seq = point.forward(g, &hierarchy)?;
        Ok(probe(g, seq.deepest(), 16))
    })?;
    push("gradient/point-encoder", started, check);

    Ok(out)
}

fn jitter_biases(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for id in store.ids().collect::<Vec<_>>() {
        if store.name(id).ends_with("bias") {
            let v = store.value_mut(id);
            *v = random(rng, v.rows(), v.cols()).scale(0.1);
        }
    }
}

fn point_encoder(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<(PointEncoder, ParamStore)> {
    let mut store = ParamStore::new();
    let point = PointEncoder::new(&mut store, "point", &cfg.point, rng)?;
    Ok((point, store))
}

fn max_row_deviation(m: &Matrix) -> f64 {
    (0..m.rows())
        .map(|r| (m.row(r).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Softmax, attention, interpolation and KL normalisation over random
/// draws of the tiny network.
pub fn check_normalization(draws: usize, seed: u64) -> Result<Vec<OracleCheck>> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig::tiny();
    let (mut phi_err, mut attn_err, mut interp_err, mut kl_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut heat_outside = 0usize;
    for draw in 0..draws {
        let (net, store) = Network::new(&cfg, 3, draw as u64 ^ seed)?;
        let side = cfg.image_size as u32;
        let pixels = image::Rgb32FImage::from_fn(side, side, |_, _| image::Rgb([rng.gen(), rng.gen(), rng.gen()]));
        let x0 = rng.gen_range(0.0..8.0);
        let y0 = rng.gen_range(0.0..8.0);
        let sub = BBox::new(x0, y0, x0 + rng.gen_range(2.0..8.0), y0 + rng.gen_range(2.0..8.0));
        let x1 = rng.gen_range(0.0..8.0);
        let y1 = rng.gen_range(0.0..8.0);
        let obj = BBox::new(x1, y1, x1 + rng.gen_range(2.0..8.0), y1 + rng.gen_range(2.0..8.0));
        let coords: Vec<Point3> = (0..cfg.point_count)
            .map(|_| [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0)))
            .collect();
        let image = crate::data::InteractionImage {
            pixels,
            box_subject: sub,
            box_object: obj,
            affordance: 0,
        };
        let input = ModelInput::prepare(&image, &coords, &cfg)?;
        let mut g = Graph::with_params(&store);
        let t = net.forward(&mut g, &input)?;
        let jra = t.jra.as_ref().expect("tiny config uses the alignment module");
        phi_err = phi_err.max((g.value(jra.phi).sum() - 1.0).abs());
        let arm = t.arm.expect("tiny config uses the revealing module");
        for &a in jra.attention.iter().chain([&arm.attn1, &arm.attn2]) {
            attn_err = attn_err.max(max_row_deviation(g.value(a)));
        }
        heat_outside += g.value(t.heatmap).as_slice().iter().filter(|&&h| !(h > 0.0 && h < 1.0)).count();

        // standalone pieces at wider value ranges
        let scale = rng.gen_range(0.1..10.0);
        let mut g = Graph::new();
        let p = g.input(random(&mut rng, 6, 5).scale(scale));
        let i = g.input(random(&mut rng, 6, 4).scale(scale));
        let phi = cross_similarity(&mut g, p, i)?;
        phi_err = phi_err.max((g.value(phi).sum() - 1.0).abs());
        let (_, w) = cross_attend(&mut g, p, i, i);
        attn_err = attn_err.max(max_row_deviation(g.value(w)));

        let n_src = rng.gen_range(1..20);
        let src: Vec<Point3> = (0..n_src).map(|_| [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0))).collect();
        let mut dst: Vec<Point3> = (0..30).map(|_| [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0))).collect();
        dst.push(src[0]);
        let mix = interpolation_mix(&src, &dst, 3)?;
        interp_err = interp_err.max(max_row_deviation(&mix.to_dense().transpose()));

        let x = random(&mut rng, 6, 5).scale(scale);
        kl_max = kl_max.max(kl_loss(&x, &x, 1e-12)?.abs());
    }
    Ok(vec![
        OracleCheck::new("normalization/cross-similarity", draws, phi_err, 1e-5, started),
        OracleCheck::new("normalization/attention-rows", draws, attn_err, 1e-5, started),
        OracleCheck::new("normalization/interpolation", draws, interp_err, 1e-6, started),
        OracleCheck::new("normalization/heatmap-range", draws, heat_outside as f64, 0.0, started),
        OracleCheck::new("normalization/kl-self", draws, kl_max, 1e-6, started),
    ])
}

/// Every check at its full case count.
pub fn run_oracle_suite(seed: u64) -> Result<Vec<OracleCheck>> {
    let mut checks = check_metrics(1000, seed)?;
    checks.push(check_fps(500, seed)?);
    checks.extend(check_gradients(seed)?);
    checks.extend(check_normalization(1000, seed)?);
    Ok(checks)
}
