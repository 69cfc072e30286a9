//! Per-point heatmap metrics and the aggregated report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};

/// Ground truth at or above this value counts as positive.
pub const GT_THRESHOLD: f64 = 0.5;
/// Prediction thresholds `k / 20` for `k = 1..=19`.
pub const AIOU_LEVELS: usize = 19;

fn same_len(pred: &[f64], gt: &[f64]) -> Result<()> {
    if pred.len() != gt.len() {
        return arg_err(format!("prediction has {} values, ground truth {}", pred.len(), gt.len()));
    }
    Ok(())
}

/// Rank-statistic AUC with average ranks for ties. `None` when the ground
/// truth has no positives or no negatives.
pub fn auc(pred: &[f64], gt: &[f64]) -> Result<Option<f64>> {
    same_len(pred, gt)?;
    let positive: Vec<bool> = gt.iter().map(|&g| g >= GT_THRESHOLD).collect();
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = pred.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by(|&a, &b| pred[a].total_cmp(&pred[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pred[order[j + 1]] == pred[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(Some(u / (n_pos * n_neg) as f64))
}

/// Mean IoU over the prediction thresholds `0.05, 0.10, ..., 0.95`.
pub fn aiou(pred: &[f64], gt: &[f64]) -> Result<f64> {
    same_len(pred, gt)?;
    let mut total = 0.0;
    for k in 1..=AIOU_LEVELS {
        let thr = k as f64 / 20.0;
        let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
        for (&p, &g) in pred.iter().zip(gt) {
            match (p >= thr, g >= GT_THRESHOLD) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                (false, false) => {}
            }
        }
        let union = tp + fp + fneg;
        total += if union == 0 { 1.0 } else { tp as f64 / union as f64 };
    }
    Ok(total / AIOU_LEVELS as f64)
}

/// Histogram intersection of the two sum-normalised maps.
pub fn sim(pred: &[f64], gt: &[f64]) -> Result<f64> {
    same_len(pred, gt)?;
    if let Some(v) = pred.iter().chain(gt).find(|v| !(**v >= 0.0)) {
        return arg_err(format!("SIM needs non-negative values, got {v}"));
    }
    let (sp, sg): (f64, f64) = (pred.iter().sum(), gt.iter().sum());
    Ok(match (sp > 0.0, sg > 0.0) {
        (false, false) => 1.0,
        (true, false) | (false, true) => 0.0,
        (true, true) => pred.iter().zip(gt).map(|(p, g)| (p / sp).min(g / sg)).sum(),
    })
}

pub fn mae(pred: &[f64], gt: &[f64]) -> Result<f64> {
    same_len(pred, gt)?;
    if pred.is_empty() {
        return arg_err("MAE of an empty map");
    }
    Ok(pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).sum::<f64>() / pred.len() as f64)
}

/// The four metrics of one prediction (fractions, not percent).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub auc: Option<f64>,
    pub aiou: f64,
    pub sim: f64,
    pub mae: f64,
}

impl SampleMetrics {
    pub fn compute(pred: &[f64], gt: &[f64]) -> Result<Self> {
        Ok(Self {
            auc: auc(pred, gt)?,
            aiou: aiou(pred, gt)?,
            sim: sim(pred, gt)?,
            mae: mae(pred, gt)?,
        })
    }
}

/// One report row. AUC and aIoU are percentages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    pub samples: usize,
    /// Samples whose AUC is undefined (single-class ground truth).
    pub auc_excluded: usize,
    pub auc: Option<f64>,
    pub aiou: f64,
    pub sim: f64,
    pub mae: f64,
}

impl MetricRow {
    fn from_samples(name: &str, samples: &[SampleMetrics]) -> Self {
        let n = samples.len().max(1) as f64;
        let aucs: Vec<f64> = samples.iter().filter_map(|s| s.auc).collect();
        Self {
            name: name.to_string(),
            samples: samples.len(),
            auc_excluded: samples.len() - aucs.len(),
            auc: (!aucs.is_empty()).then(|| 100.0 * aucs.iter().sum::<f64>() / aucs.len() as f64),
            aiou: 100.0 * samples.iter().map(|s| s.aiou).sum::<f64>() / n,
            sim: samples.iter().map(|s| s.sim).sum::<f64>() / n,
            mae: samples.iter().map(|s| s.mae).sum::<f64>() / n,
        }
    }

    /// Class-balanced average; counts are summed.
    fn mean_of(name: &str, rows: &[MetricRow]) -> Self {
        let n = rows.len().max(1) as f64;
        let aucs: Vec<f64> = rows.iter().filter_map(|r| r.auc).collect();
        Self {
            name: name.to_string(),
            samples: rows.iter().map(|r| r.samples).sum(),
            auc_excluded: rows.iter().map(|r| r.auc_excluded).sum(),
            auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
            aiou: rows.iter().map(|r| r.aiou).sum::<f64>() / n,
            sim: rows.iter().map(|r| r.sim).sum::<f64>() / n,
            mae: rows.iter().map(|r| r.mae).sum::<f64>() / n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub overall: MetricRow,
    /// Samples dropped because their class is missing from the vocabulary.
    pub skipped: usize,
}

impl MetricReport {
    /// Rows follow `class_names` order and only list classes that occur;
    /// the overall row is the unweighted mean of the class rows.
    pub fn from_samples(class_names: &[String], samples: &[(usize, SampleMetrics)], skipped: usize) -> Self {
        let mut by_class: BTreeMap<usize, Vec<SampleMetrics>> = BTreeMap::new();
        for &(c, m) in samples {
            by_class.entry(c).or_default().push(m);
        }
        let rows: Vec<MetricRow> = by_class
            .iter()
            .map(|(&c, ms)| {
                let name = class_names.get(c).map_or_else(|| format!("class{c}"), Clone::clone);
                MetricRow::from_samples(&name, ms)
            })
            .collect();
        let overall = MetricRow::mean_of("overall", &rows);
        Self { rows, overall, skipped }
    }

    /// Whitespace-aligned table, one row per class plus `overall`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>7} {:>8} {:>8} {:>7} {:>7} {:>12}",
            "affordance", "samples", "AUC", "aIoU", "SIM", "MAE", "auc_excluded"
        );
        for row in self.rows.iter().chain(std::iter::once(&self.overall)) {
            let auc = row.auc.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"));
            let _ = writeln!(
                out,
                "{:<16} {:>7} {:>8} {:>8.2} {:>7.3} {:>7.3} {:>12}",
                row.name, row.samples, auc, row.aiou, row.sim, row.mae, row.auc_excluded
            );
        }
        if self.skipped > 0 {
            let _ = writeln!(out, "skipped {} samples with unknown classes", self.skipped);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}
