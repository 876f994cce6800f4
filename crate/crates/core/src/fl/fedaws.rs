//! Server-side spread-out penalty on class embeddings:
//! `Σ_{k<k′} max(0, cos(w_k, w_k′))²`.

use crate::error::{Error, Result};
use crate::optim::OptimizerState;
use crate::tensor::{dot, norm, Tensor};

pub fn fedaws_loss_and_gradient(logit_matrix: &Tensor) -> Result<(f64, Tensor)> {
    let (k, d) = (logit_matrix.rows(), logit_matrix.cols());
    if k < 2 {
        return Err(Error::invalid("need at least two class embeddings"));
    }
    let norms: Vec<f64> = (0..k).map(|i| norm(logit_matrix.row(i))).collect();
    if let Some(i) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::invalid(format!("class embedding {i} has zero norm")));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; k * d];
    for a in 0..k {
        for b in (a + 1)..k {
            let (wa, wb) = (logit_matrix.row(a), logit_matrix.row(b));
            let cos = dot(wa, wb) / (norms[a] * norms[b]);
            if cos <= 0.0 {
                continue;
            }
            loss += cos * cos;
            let c = 2.0 * cos;
            for j in 0..d {
                // ∂cos/∂w_a = w_b/(‖a‖‖b‖) − cos · w_a/‖a‖²
                grad[a * d + j] += c * (wb[j] / (norms[a] * norms[b]) - cos * wa[j] / (norms[a] * norms[a]));
                grad[b * d + j] += c * (wa[j] / (norms[a] * norms[b]) - cos * wb[j] / (norms[b] * norms[b]));
            }
        }
    }
    Ok((loss, Tensor::matrix(k, d, grad)?))
}

/// One server-optimizer step on the logit matrix against the penalty.
pub fn fedaws_regularize(logit_matrix: &Tensor, server_state: &mut OptimizerState) -> Result<Tensor> {
    let (_, grad) = fedaws_loss_and_gradient(logit_matrix)?;
    server_state.step(logit_matrix, &grad)
}
