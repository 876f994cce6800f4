use std::fmt;

use rayon::prelude::*;

use super::dataset::FederatedDataset;
use crate::error::{Error, Result};
use crate::model::Model;

/// Counts indexed `[true class][predicted class]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    /// From row-major counts.
    pub fn from_counts(k: usize, counts: Vec<u64>) -> Result<Self> {
        if k == 0 || counts.len() != k * k {
            return Err(Error::ShapeMismatch {
                expected: vec![k, k],
                found: vec![counts.len()],
            });
        }
        Ok(Self { k, counts })
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.k + predicted] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn row_sum(&self, i: usize) -> u64 {
        (0..self.k).map(|j| self.get(i, j)).sum()
    }

    fn col_sum(&self, j: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, j)).sum()
    }

    fn nonempty(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::invalid("empty confusion matrix")),
            t => Ok(t as f64),
        }
    }
}

/// Evaluate `model` on the pooled samples of every held-out client.
pub fn confusion(model: &Model, data: &FederatedDataset) -> Result<ConfusionMatrix> {
    let k = data.num_classes();
    if model.num_classes() != k {
        return Err(Error::ShapeMismatch {
            expected: vec![k],
            found: vec![model.num_classes()],
        });
    }
    let parts = data
        .heldout_clients()
        .par_iter()
        .filter(|&&id| !data.clients()[id].is_empty())
        .map(|&id| {
            let client = &data.clients()[id];
            let predicted = model.predict(client.features())?;
            let mut cm = ConfusionMatrix::new(k);
            for (&y, p) in client.labels().iter().zip(predicted) {
                cm.record(y, p);
            }
            Ok(cm)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cm = ConfusionMatrix::new(k);
    parts.iter().for_each(|p| cm.merge(p));
    if cm.total() == 0 {
        return Err(Error::invalid("held-out pool is empty"));
    }
    Ok(cm)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.nonempty()?;
    Ok((0..cm.k).map(|i| cm.get(i, i)).sum::<u64>() as f64 / total)
}

/// Unweighted mean of per-class F1; a class that is never true and never
/// predicted scores 0.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    cm.nonempty()?;
    let sum: f64 = (0..cm.k)
        .map(|c| {
            let tp = cm.get(c, c) as f64;
            let denom = (cm.row_sum(c) + cm.col_sum(c)) as f64;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .sum();
    Ok(sum / cm.k as f64)
}

/// Multiclass Matthews correlation (covariance form); 0 when either marginal
/// is concentrated on one class.
pub fn mcc(cm: &ConfusionMatrix) -> Result<f64> {
    let s = cm.nonempty()?;
    let c = (0..cm.k).map(|i| cm.get(i, i)).sum::<u64>() as f64;
    let t: Vec<f64> = (0..cm.k).map(|i| cm.row_sum(i) as f64).collect();
    let p: Vec<f64> = (0..cm.k).map(|j| cm.col_sum(j) as f64).collect();
    let tp: f64 = t.iter().zip(&p).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|v| v * v).sum();
    let tt: f64 = t.iter().map(|v| v * v).sum();
    let denom = ((s * s - pp) * (s * s - tt)).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(((c * s - tp) / denom).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RoundsToTarget {
    /// 1-based round of the first evaluation at or above target.
    Reached(usize),
    NotReached,
}

impl RoundsToTarget {
    pub fn reached(self) -> Option<usize> {
        match self {
            RoundsToTarget::Reached(r) => Some(r),
            RoundsToTarget::NotReached => None,
        }
    }

    /// `"37"` or `">T"` for a run of `total_rounds`.
    pub fn display(self, total_rounds: usize) -> impl fmt::Display {
        match self {
            RoundsToTarget::Reached(r) => r.to_string(),
            RoundsToTarget::NotReached => format!(">{total_rounds}"),
        }
    }
}

pub fn rounds_to_target(series: &[f64], target: f64) -> Result<RoundsToTarget> {
    if series.is_empty() {
        return Err(Error::invalid("empty accuracy series"));
    }
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::invalid(format!("target accuracy {target} outside (0, 1)")));
    }
    Ok(series
        .iter()
        .position(|&a| a >= target)
        .map_or(RoundsToTarget::NotReached, |i| RoundsToTarget::Reached(i + 1)))
}
