//! F1, fault detection rate (recall) and confusion matrices.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::{Frame, Label};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: Label,
    pub support: usize,
    pub precision: f64,
    /// Fault detection rate.
    pub fdr: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// Class order used by `per_class` and both confusion-matrix axes.
    pub classes: Vec<Label>,
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean F1 over classes present in the ground truth.
    pub macro_f1: f64,
    pub accuracy: f64,
    /// `confusion[t][p]`: rows are true classes, columns predicted ones.
    pub confusion: Vec<Vec<usize>>,
}

impl MetricsReport {
    pub fn class(&self, label: Label) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.label == label)
    }

    pub fn f1_of(&self, label: Label) -> f64 {
        self.class(label).map_or(0.0, |c| c.f1)
    }

    /// Macro F1 restricted to `labels` that occur in the ground truth.
    pub fn macro_f1_over(&self, labels: &[Label]) -> f64 {
        let vals: Vec<f64> = self
            .per_class
            .iter()
            .filter(|c| c.support > 0 && labels.contains(&c.label))
            .map(|c| c.f1)
            .collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }
}

/// Scores `predicted` against `truth`. Classes are the frame labels followed
/// by any extra label (such as a fresh anomaly label) seen in either vector,
/// in ascending order.
pub fn compute_metrics(truth: &[Label], predicted: &[Label], frame: &Frame) -> Result<MetricsReport> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch(truth.len(), predicted.len()));
    }
    let mut classes: Vec<Label> = frame.labels().to_vec();
    let mut extra: Vec<Label> = truth
        .iter()
        .chain(predicted)
        .copied()
        .filter(|l| !frame.contains(*l))
        .collect();
    extra.sort_unstable();
    extra.dedup();
    classes.extend(extra);

    let pos: BTreeMap<Label, usize> = classes.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let n = classes.len();
    let mut confusion = vec![vec![0usize; n]; n];
    for (t, p) in truth.iter().zip(predicted) {
        confusion[pos[t]][pos[p]] += 1;
    }

    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|i| {
            let tp = confusion[i][i] as f64;
            let support: usize = confusion[i].iter().sum();
            let predicted_as: usize = confusion.iter().map(|row| row[i]).sum();
            let precision = if predicted_as > 0 { tp / predicted_as as f64 } else { 0.0 };
            let fdr = if support > 0 { tp / support as f64 } else { 0.0 };
            let f1 = if precision + fdr > 0.0 {
                2.0 * precision * fdr / (precision + fdr)
            } else {
                0.0
            };
            ClassMetrics {
                label: classes[i],
                support,
                precision,
                fdr,
                f1,
            }
        })
        .collect();

    let present: Vec<f64> = per_class.iter().filter(|c| c.support > 0).map(|c| c.f1).collect();
    let macro_f1 = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    let correct = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
    let accuracy = if truth.is_empty() {
        0.0
    } else {
        correct as f64 / truth.len() as f64
    };
    Ok(MetricsReport {
        classes,
        per_class,
        macro_f1,
        accuracy,
        confusion,
    })
}

/// Mean and max of an uncertainty trace, grouped by true class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UncertaintySummary {
    pub label: Label,
    pub count: usize,
    pub mean_u_d: f64,
    pub max_u_d: f64,
    pub mean_u_y: f64,
    pub max_u_y: f64,
}

pub fn summarize_uncertainty(truth: &[Label], u_d: &[f64], u_y: &[f64]) -> Vec<UncertaintySummary> {
    let mut groups: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, &t) in truth.iter().enumerate() {
        groups.entry(t).or_default().push(i);
    }
    groups
        .into_iter()
        .map(|(label, idx)| {
            let n = idx.len() as f64;
            let fold = |xs: &[f64]| {
                let vals = idx.iter().map(|&i| xs[i]);
                (
                    vals.clone().sum::<f64>() / n,
                    vals.fold(f64::NEG_INFINITY, f64::max),
                )
            };
            let (mean_u_d, max_u_d) = fold(u_d);
            let (mean_u_y, max_u_y) = fold(u_y);
            UncertaintySummary {
                label,
                count: idx.len(),
                mean_u_d,
                max_u_d,
                mean_u_y,
                max_u_y,
            }
        })
        .collect()
}
