//! Classification metrics and the per-run metrics record.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_aligned(preds: &[usize], labels: &[usize]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::Metric(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Metric("no samples to score".into()));
    }
    Ok(())
}

pub fn top1_accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_aligned(preds, labels)?;
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Per-class (tp, fp, fn) for classes below `k`.
fn confusion(preds: &[usize], labels: &[usize], k: usize) -> Result<Vec<(usize, usize, usize)>> {
    check_aligned(preds, labels)?;
    let mut counts = vec![(0, 0, 0); k];
    for (&p, &y) in preds.iter().zip(labels) {
        if p >= k || y >= k {
            return Err(Error::OutOfRange {
                what: "class index",
                value: p.max(y),
                min: 0,
                max: k.saturating_sub(1),
            });
        }
        if p == y {
            counts[y].0 += 1;
        } else {
            counts[p].1 += 1;
            counts[y].2 += 1;
        }
    }
    Ok(counts)
}

/// Mean over classes present in `labels` of the per-class F1.
pub fn macro_f1(preds: &[usize], labels: &[usize], k: usize) -> Result<f64> {
    let counts = confusion(preds, labels, k)?;
    let present: BTreeSet<usize> = labels.iter().copied().collect();
    let total: f64 = present
        .iter()
        .map(|&c| {
            let (tp, fp, fn_) = counts[c];
            let denom = 2 * tp + fp + fn_;
            if denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / present.len() as f64)
}

/// Mean over classes present in `labels` of the per-class recall.
pub fn macro_recall(preds: &[usize], labels: &[usize], k: usize) -> Result<f64> {
    let per_class = per_class_recall(preds, labels, k)?;
    Ok(per_class.values().sum::<f64>() / per_class.len() as f64)
}

/// Recall (per-class accuracy) of every class present in `labels`.
pub fn per_class_recall(
    preds: &[usize],
    labels: &[usize],
    k: usize,
) -> Result<BTreeMap<usize, f64>> {
    let counts = confusion(preds, labels, k)?;
    let present: BTreeSet<usize> = labels.iter().copied().collect();
    Ok(present
        .into_iter()
        .map(|c| {
            let (tp, _, fn_) = counts[c];
            (c, tp as f64 / (tp + fn_) as f64)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMetrics {
    pub s: usize,
    pub top1: f64,
    pub macro_f1: f64,
    pub macro_recall: f64,
    /// Accuracy per dataset class seen so far.
    pub per_class: BTreeMap<usize, f64>,
}

impl StateMetrics {
    /// Scores predictions given as dataset class indices.
    pub fn score(s: usize, preds: &[usize], labels: &[usize], num_classes: usize) -> Result<Self> {
        Ok(Self {
            s,
            top1: top1_accuracy(preds, labels)?,
            macro_f1: macro_f1(preds, labels, num_classes)?,
            macro_recall: macro_recall(preds, labels, num_classes)?,
            per_class: per_class_recall(preds, labels, num_classes)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run_id: String,
    pub seed: u64,
    /// Whether score rectification was applied at evaluation.
    pub sfc: bool,
    pub schedule: Vec<Vec<usize>>,
    pub states: Vec<StateMetrics>,
    pub avg_top1: f64,
}

impl MetricsRecord {
    pub fn new(run_id: impl Into<String>, seed: u64, sfc: bool, schedule: Vec<Vec<usize>>) -> Self {
        Self {
            run_id: run_id.into(),
            seed,
            sfc,
            schedule,
            states: Vec::new(),
            avg_top1: 0.0,
        }
    }

    pub fn push(&mut self, state: StateMetrics) {
        self.states.push(state);
        self.avg_top1 = average(self.states.iter().map(|s| s.top1));
    }

    pub fn final_top1(&self) -> Option<f64> {
        self.states.last().map(|s| s.top1)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Mean across states, the "Avg." of a run.
pub fn average(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
