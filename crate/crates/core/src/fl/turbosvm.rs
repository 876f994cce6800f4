//! SVM-guided aggregation of class embeddings: averaging only the client
//! embeddings that are support vectors, then spreading the aggregated
//! embeddings apart along each pair's hyperplane normal.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::optim::OptimizerState;
use crate::svm::{ClassSample, OvoSvm};
use crate::tensor::{dot, Tensor};

use super::aggregate::weighted_mean;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaDirection {
    #[default]
    Decreasing,
    Increasing,
}

/// Slack penalty λ per round: linear between `initial` and `floor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSchedule {
    pub initial: f64,
    pub floor: f64,
    pub total_rounds: usize,
    pub direction: LambdaDirection,
}

impl LambdaSchedule {
    pub fn new(initial: f64, floor: f64, total_rounds: usize) -> Result<Self> {
        let s = Self {
            initial,
            floor,
            total_rounds,
            direction: LambdaDirection::Decreasing,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial > 0.0 && self.floor > 0.0 && self.floor <= self.initial) || self.total_rounds == 0 {
            return Err(Error::invalid(format!(
                "lambda schedule needs 0 < floor <= initial and T >= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Decreasing: `max(floor, initial · (1 − t/T))`.
/// Increasing: `max(floor, initial · (t+1)/T)`.
pub fn lambda_value(schedule: &LambdaSchedule, t: usize) -> Result<f64> {
    if t >= schedule.total_rounds {
        return Err(Error::invalid(format!(
            "round {t} outside schedule of {} rounds",
            schedule.total_rounds
        )));
    }
    let frac = t as f64 / schedule.total_rounds as f64;
    let raw = match schedule.direction {
        LambdaDirection::Decreasing => schedule.initial * (1.0 - frac),
        LambdaDirection::Increasing => schedule.initial * (t + 1) as f64 / schedule.total_rounds as f64,
    };
    Ok(raw.max(schedule.floor))
}

/// Row `k` of every client's logit matrix becomes one class-`k` sample,
/// tagged with the client's position in `models` and weighted by its size.
pub fn class_samples_from_models(models: &[Model], dataset_sizes: &[f64]) -> Result<Vec<Vec<ClassSample>>> {
    let first = models.first().ok_or_else(|| Error::invalid("no client models"))?;
    let k = first.num_classes();
    let mut classes = vec![Vec::with_capacity(models.len()); k];
    for (client, (m, &w)) in models.iter().zip(dataset_sizes).enumerate() {
        first.check_compatible(m)?;
        for (class, bucket) in classes.iter_mut().enumerate() {
            bucket.push(ClassSample {
                client,
                embedding: Tensor::vector(m.logit_matrix().row(class).to_vec())?,
                weight: w,
            });
        }
    }
    Ok(classes)
}

/// Row `k` = size-weighted mean of class `k`'s support-vector embeddings.
pub fn turbosvm_selective_aggregate(svm: &OvoSvm) -> Result<Tensor> {
    let k = svm.num_classes();
    let d = svm.class_samples(0)[0].embedding.len();
    let mut out = Vec::with_capacity(k * d);
    for class in 0..k {
        let svs = svm.support_vectors_of_class(class)?;
        if svs.is_empty() {
            return Err(Error::invalid(format!("class {class} has no support vectors")));
        }
        let weights: Vec<f64> = svs.iter().map(|s| s.weight).collect();
        out.extend(weighted_mean(svs.iter().map(|s| s.embedding.data()), &weights, d));
    }
    Tensor::matrix(k, d, out)
}

/// `Σ_{k<k′} exp(−((w_k − w_k′)ᵀh)² / (2‖h‖²))` with the normals `h` held
/// fixed, and its gradient with respect to the logit matrix.
pub fn spread_loss_and_gradient(logit_matrix: &Tensor, normals: &[((usize, usize), Tensor)]) -> Result<(f64, Tensor)> {
    let (k, d) = (logit_matrix.rows(), logit_matrix.cols());
    let mut loss = 0.0;
    let mut grad = vec![0.0; k * d];
    for ((a, b), h) in normals {
        let (a, b) = (*a, *b);
        if a >= k || b >= k || h.len() != d {
            return Err(Error::invalid(format!("hyperplane ({a}, {b}) does not fit the logit matrix")));
        }
        let h = h.data();
        let h_sq = dot(h, h);
        if h_sq == 0.0 {
            return Err(Error::invalid(format!("zero-norm hyperplane for pair ({a}, {b})")));
        }
        let gap = dot(logit_matrix.row(a), h) - dot(logit_matrix.row(b), h);
        let term = (-(gap * gap) / (2.0 * h_sq)).exp();
        loss += term;
        let c = -term * gap / h_sq;
        for j in 0..d {
            grad[a * d + j] += c * h[j];
            grad[b * d + j] -= c * h[j];
        }
    }
    Ok((loss, Tensor::matrix(k, d, grad)?))
}

fn pair_normals(svm: &OvoSvm) -> Result<Vec<((usize, usize), Tensor)>> {
    let k = svm.num_classes();
    let mut normals = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in (a + 1)..k {
            normals.push(((a, b), svm.hyperplane(a, b)?.0));
        }
    }
    Ok(normals)
}

/// `reg_steps` server-optimizer steps on the spread loss. Returns the
/// updated matrix and the loss before each step followed by the final loss.
pub fn turbosvm_maxmargin_regularize(
    logit_matrix: &Tensor,
    svm: &OvoSvm,
    server_state: &mut OptimizerState,
    reg_steps: usize,
) -> Result<(Tensor, Vec<f64>)> {
    if svm.num_classes() != logit_matrix.rows() {
        return Err(Error::invalid("svm and logit matrix disagree on the class count"));
    }
    let normals = pair_normals(svm)?;
    let mut w = logit_matrix.clone();
    let mut trace = Vec::with_capacity(reg_steps + 1);
    for _ in 0..reg_steps {
        let (loss, grad) = spread_loss_and_gradient(&w, &normals)?;
        trace.push(loss);
        w = server_state.step(&w, &grad)?;
    }
    trace.push(spread_loss_and_gradient(&w, &normals)?.0);
    if trace.windows(2).any(|p| p[1] >= p[0]) && reg_steps > 0 {
        warn!("spread loss did not decrease on every step: {trace:?}");
    }
    Ok((w, trace))
}
