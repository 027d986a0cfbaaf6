//! Ranking and threshold metrics for binary link prediction.

use serde::Serialize;

use crate::error::{Error, Result};

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::shape("metric", &[scores.len()], &[labels.len()]));
    }
    if let Some(&y) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::InvalidArgument(format!("label {y} is not 0 or 1")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite { op: "metric" });
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by descending score; ties keep input order.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Area under the ROC curve via midrank summation: `P(s⁺ > s⁻) + ½ P(tie)`.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end share their mean
        let midrank = (start + 1 + end) as f64 / 2.0;
        let tied_pos = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        rank_sum += midrank * tied_pos as f64;
        start = end;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision: precision accumulated at each distinct score
/// threshold, weighted by the recall gained there.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, _) = check(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric("AUPRC needs at least one positive".into()));
    }
    let order = descending(scores);
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let gained = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        tp += gained;
        seen += end - start;
        ap += gained as f64 / pos as f64 * (tp as f64 / seen as f64);
        start = end;
    }
    Ok(ap)
}

/// F1 with prediction `score ≥ threshold`; zero when precision + recall is zero.
pub fn f1(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    check(scores, labels)?;
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            (false, false) => {}
        }
    }
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// AUROC, AUPRC and F1 at 0.5 for one evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricTriple {
    pub auroc: f64,
    pub auprc: f64,
    pub f1: f64,
}

pub const DECISION_THRESHOLD: f64 = 0.5;

pub fn evaluate(scores: &[f64], labels: &[u8]) -> Result<MetricTriple> {
    Ok(MetricTriple {
        auroc: auroc(scores, labels)?,
        auprc: auprc(scores, labels)?,
        f1: f1(scores, labels, DECISION_THRESHOLD)?,
    })
}

/// Mean and sample standard deviation of one metric over runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub auroc: MeanStd,
    pub auprc: MeanStd,
    pub f1: MeanStd,
}

fn mean_std(values: &[f64]) -> MeanStd {
    if values.iter().all(|&v| v == values[0]) {
        return MeanStd {
            mean: values[0],
            std: 0.0,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    MeanStd {
        mean,
        std: var.sqrt(),
    }
}

/// Summarizes repeated runs with `n − 1` in the variance denominator.
pub fn aggregate(runs: &[MetricTriple]) -> Result<Aggregate> {
    if runs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "aggregation needs at least 2 runs, got {}",
            runs.len()
        )));
    }
    let column = |f: fn(&MetricTriple) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>());
    Ok(Aggregate {
        auroc: column(|r| r.auroc),
        auprc: column(|r| r.auprc),
        f1: column(|r| r.f1),
    })
}
