use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::ClientData;
use crate::error::{Error, Result};
use crate::model::{Batch, Model};
use crate::optim::OptimizerState;
use crate::tensor::{dot, norm};

/// Client-side training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClientVariant {
    /// Plain cross-entropy.
    Vanilla,
    /// Cross-entropy plus `μ/2 ‖θ − θ_G‖²`.
    Prox { mu: f64 },
    /// Cross-entropy plus `coeff` times the model-contrastive loss.
    Moon { coeff: f64, temperature: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub variant: ClientVariant,
}

impl ClientConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("client learning rate must be nonnegative"));
        }
        match self.variant {
            ClientVariant::Prox { mu } if !(mu >= 0.0) => Err(Error::invalid("prox mu must be nonnegative")),
            ClientVariant::Moon { coeff, temperature } if !(coeff >= 0.0 && temperature > 0.0) => {
                Err(Error::invalid("moon needs coeff >= 0 and temperature > 0"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalUpdate {
    pub model: Model,
    /// Mean of the per-batch objective values seen during training.
    pub mean_loss: f64,
    pub steps: u64,
}

/// Numerically stable `ln(1 + eˣ)`.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

const COS_EPS: f64 = 1e-8;

/// Cosine with each norm clamped below at `COS_EPS`; returns the value and
/// its gradient with respect to `a`.
fn cosine_and_grad(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let na_raw = norm(a);
    let na = na_raw.max(COS_EPS);
    let nb = norm(b).max(COS_EPS);
    let ab = dot(a, b);
    let cos = ab / (na * nb);
    let shrink = if na_raw > COS_EPS { cos / (na * na_raw) } else { 0.0 };
    let grad = a
        .iter()
        .zip(b)
        .map(|(&ai, &bi)| bi / (na * nb) - shrink * ai)
        .collect();
    (cos, grad)
}

/// Mean over the batch of
/// `−log(exp(cos(z, z_g)/τ) / (exp(cos(z, z_g)/τ) + exp(cos(z, z_p)/τ)))`
/// and its gradient with respect to the current embeddings `z`.
/// All three blocks are `B × d`, row-major.
pub fn moon_embedding_loss(
    current: &[f64],
    global: &[f64],
    previous: &[f64],
    batch: usize,
    temperature: f64,
) -> Result<(f64, Vec<f64>)> {
    if current.len() != global.len() || current.len() != previous.len() || current.len() % batch != 0 {
        return Err(Error::invalid("moon embedding blocks disagree in shape"));
    }
    let d = current.len() / batch;
    let inv_b = 1.0 / batch as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; current.len()];
    for s in 0..batch {
        let z = &current[s * d..(s + 1) * d];
        let (cg, dg) = cosine_and_grad(z, &global[s * d..(s + 1) * d]);
        let (cp, dp) = cosine_and_grad(z, &previous[s * d..(s + 1) * d]);
        let diff = (cp - cg) / temperature;
        loss += softplus(diff);
        // dℓ/d(diff) = σ(diff)
        let sig = 1.0 / (1.0 + (-diff).exp());
        for j in 0..d {
            grad[s * d + j] = inv_b * sig * (dp[j] - dg[j]) / temperature;
        }
    }
    Ok((loss * inv_b, grad))
}

/// The local objective for one batch and its gradient, including the
/// variant's extra term. `previous` is the client's model from its last
/// participation (MOON only); `None` falls back to the global model.
pub fn client_objective(
    model: &Model,
    batch: &Batch,
    variant: ClientVariant,
    global: &Model,
    previous: Option<&Model>,
) -> Result<(f64, Model)> {
    match variant {
        ClientVariant::Vanilla => model.loss_and_gradient(batch),
        ClientVariant::Prox { mu } => {
            let (loss, grads) = model.loss_and_gradient(batch)?;
            if mu == 0.0 {
                return Ok((loss, grads));
            }
            let theta = model.flatten_params();
            let anchor = global.flatten_params();
            let diff = theta.sub(&anchor)?;
            let mut g = grads.flatten_params();
            g.axpy(mu, &diff)?;
            let prox = 0.5 * mu * diff.norm().powi(2);
            Ok((loss + prox, Model::unflatten_params(model, &g)?))
        }
        ClientVariant::Moon { coeff, temperature } => {
            let z_global = global.encode(&batch.inputs)?;
            let z_prev = previous.unwrap_or(global).encode(&batch.inputs)?;
            let term = |emb: &[f64], b: usize| -> Result<(f64, Vec<f64>)> {
                let (l, g) = moon_embedding_loss(emb, z_global.data(), z_prev.data(), b, temperature)?;
                Ok((coeff * l, g.into_iter().map(|v| coeff * v).collect()))
            };
            model.objective_and_gradient(batch, Some(&term))
        }
    }
}

/// `E` epochs of mini-batch SGD from a copy of the global model. Each epoch
/// shuffles the client's samples with `rng`; the last partial batch is kept.
pub fn client_update<R: Rng + ?Sized>(
    global: &Model,
    data: &ClientData,
    config: &ClientConfig,
    previous: Option<&Model>,
    rng: &mut R,
) -> Result<LocalUpdate> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("client has no samples"));
    }
    if data.feature_dim() != global.input_dim() {
        return Err(Error::ShapeMismatch {
            expected: vec![global.input_dim()],
            found: vec![data.feature_dim()],
        });
    }
    if let Some(p) = previous {
        global.check_compatible(p)?;
    }

    let mut model = global.clone();
    let mut optimizer = OptimizerState::sgd(config.learning_rate)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_sum = 0.0;
    let mut batches = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.batch_size) {
            let batch = data.batch(chunk)?;
            let (loss, grads) = client_objective(&model, &batch, config.variant, global, previous)?;
            let updated = optimizer.step(&model.flatten_params(), &grads.flatten_params())?;
            model = Model::unflatten_params(&model, &updated)?;
            loss_sum += loss;
            batches += 1;
        }
    }
    Ok(LocalUpdate {
        model,
        mean_loss: loss_sum / batches as f64,
        steps: optimizer.step_count(),
    })
}
