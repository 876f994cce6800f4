use log::warn;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::optim::{OptimizerKind, OptimizerState};
use crate::tensor::Tensor;

/// Parameter-wise mean weighted by `|D_n| / Σ|D_n|` over the given models.
pub fn fedavg_aggregate(models: &[Model], dataset_sizes: &[f64]) -> Result<Model> {
    let first = models
        .first()
        .ok_or_else(|| Error::invalid("fedavg over an empty model list"))?;
    if models.len() != dataset_sizes.len() {
        return Err(Error::invalid(format!(
            "{} models but {} dataset sizes",
            models.len(),
            dataset_sizes.len()
        )));
    }
    if dataset_sizes.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::invalid("dataset sizes must be positive"));
    }
    for m in &models[1..] {
        first.check_compatible(m)?;
    }
    let flats: Vec<Tensor> = models.iter().map(Model::flatten_params).collect();
    let mean = weighted_mean(flats.iter().map(Tensor::data), dataset_sizes, first.param_count());
    Model::from_flat_slice(first, &mean)
}

/// `Σ w_n x_n / Σ w_n`, accumulated in the given order.
pub(crate) fn weighted_mean<'a>(rows: impl Iterator<Item = &'a [f64]>, weights: &[f64], len: usize) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mut acc = vec![0.0; len];
    for (row, &w) in rows.zip(weights) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += w * v;
        }
    }
    for a in &mut acc {
        *a /= total;
    }
    acc
}

/// `Δ = flatten(aggregated) − flatten(global)`
pub fn pseudo_gradient(global: &Model, aggregated: &Model) -> Result<Tensor> {
    global.check_compatible(aggregated)?;
    aggregated.flatten_params().sub(&global.flatten_params())
}

/// Server optimizer step on the global parameters with gradient `−Δ`.
/// Adam gives FedAdam, AMSGrad gives FedAMS; SGD at learning rate 1 is FedAvg.
pub fn fedopt_step(global: &Model, delta: &Tensor, server_state: &mut OptimizerState) -> Result<Model> {
    let params = global.flatten_params();
    if delta.len() != params.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![params.len()],
            found: delta.shape().to_vec(),
        });
    }
    if server_state.kind() == OptimizerKind::Sgd && server_state.step_count() == 0 {
        warn!("server optimizer is plain SGD; FedOpt degenerates to FedAvg-style averaging");
    }
    let neg_delta = delta.scale(-1.0)?;
    let updated = server_state.step(&params, &neg_delta)?;
    Model::unflatten_params(global, &updated)
}
