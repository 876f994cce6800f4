//! SGD, Adam and AMSGrad over flat parameter tensors.
//!
//! The same state type drives the client optimizer (always SGD) and the
//! server optimizer of the adaptive strategies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{check_finite, Tensor};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    AmsGrad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step_count: u64,
    first_moment: Tensor,
    second_moment: Tensor,
    /// Running elementwise max of the bias-corrected second moment (AMSGrad).
    max_second_moment: Tensor,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64, param_shape: &[usize]) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate >= 0.0) {
            return Err(Error::invalid(format!("learning rate {learning_rate} must be nonnegative")));
        }
        let (m, v, vmax) = match kind {
            OptimizerKind::Sgd => (Tensor::empty(), Tensor::empty(), Tensor::empty()),
            OptimizerKind::Adam => (
                Tensor::zeros(param_shape),
                Tensor::zeros(param_shape),
                Tensor::empty(),
            ),
            OptimizerKind::AmsGrad => (
                Tensor::zeros(param_shape),
                Tensor::zeros(param_shape),
                Tensor::zeros(param_shape),
            ),
        };
        Ok(Self {
            kind,
            learning_rate,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
            step_count: 0,
            first_moment: m,
            second_moment: v,
            max_second_moment: vmax,
        })
    }

    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate, &[0])
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 {
            return Err(Error::invalid(format!(
                "betas must lie in [0,1) and epsilon be positive (got {beta1}, {beta2}, {epsilon})"
            )));
        }
        self.beta1 = beta1;
        self.beta2 = beta2;
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &Tensor {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &Tensor {
        &self.second_moment
    }

    pub fn max_second_moment(&self) -> &Tensor {
        &self.max_second_moment
    }

    /// The second-moment estimate the last update divided by: `v̂` for Adam,
    /// the running max of `v̂` for AMSGrad.
    pub fn effective_second_moment(&self) -> Option<Tensor> {
        match self.kind {
            OptimizerKind::Sgd => None,
            OptimizerKind::AmsGrad => Some(self.max_second_moment.clone()),
            OptimizerKind::Adam => {
                if self.step_count == 0 {
                    return Some(Tensor::zeros_like(&self.second_moment));
                }
                let c = 1.0 - self.beta2.powi(self.step_count as i32);
                self.second_moment.scale(1.0 / c).ok()
            }
        }
    }

    /// Clears moments and the step counter, keeping hyperparameters.
    pub fn reset(&mut self) {
        self.step_count = 0;
        for t in [&mut self.first_moment, &mut self.second_moment, &mut self.max_second_moment] {
            if !t.is_empty() {
                *t = Tensor::zeros_like(t);
            }
        }
    }

    /// Applies one step of whichever optimizer this state describes.
    pub fn step(&mut self, params: &Tensor, grad: &Tensor) -> Result<Tensor> {
        match self.kind {
            OptimizerKind::Sgd => sgd_step(params, grad, self),
            OptimizerKind::Adam | OptimizerKind::AmsGrad => adam_step(params, grad, self),
        }
    }
}

/// `params - lr * grad`
pub fn sgd_step(params: &Tensor, grad: &Tensor, state: &mut OptimizerState) -> Result<Tensor> {
    if state.kind != OptimizerKind::Sgd {
        return Err(Error::invalid(format!("sgd_step on a {:?} state", state.kind)));
    }
    params.same_shape(grad)?;
    check_finite(grad.data(), "sgd gradient")?;
    let lr = state.learning_rate;
    let out = params.zip_map(grad, "sgd update", |p, g| p - lr * g)?;
    state.step_count += 1;
    Ok(out)
}

/// Bias-corrected Adam step; with an AMSGrad state the denominator uses the
/// running elementwise max of the corrected second moment.
pub fn adam_step(params: &Tensor, grad: &Tensor, state: &mut OptimizerState) -> Result<Tensor> {
    if state.kind == OptimizerKind::Sgd {
        return Err(Error::invalid("adam_step on an SGD state"));
    }
    params.same_shape(grad)?;
    state.first_moment.same_shape(params)?;
    check_finite(grad.data(), "adam gradient")?;

    let t = state.step_count + 1;
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.epsilon, state.learning_rate);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    let amsgrad = state.kind == OptimizerKind::AmsGrad;

    let n = params.len();
    let mut m = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut vmax = Vec::with_capacity(if amsgrad { n } else { 0 });
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let g = grad.data()[i];
        let mi = b1 * state.first_moment.data()[i] + (1.0 - b1) * g;
        let vi = b2 * state.second_moment.data()[i] + (1.0 - b2) * g * g;
        let m_hat = mi / c1;
        let mut v_hat = vi / c2;
        if amsgrad {
            v_hat = v_hat.max(state.max_second_moment.data()[i]);
            vmax.push(v_hat);
        }
        out.push(params.data()[i] - lr * m_hat / (v_hat.sqrt() + eps));
        m.push(mi);
        v.push(vi);
    }
    check_finite(&m, "adam first moment")?;
    check_finite(&v, "adam second moment")?;
    let out = Tensor::new(params.shape().to_vec(), out)?;

    let shape = params.shape().to_vec();
    state.first_moment = Tensor::new(shape.clone(), m)?;
    state.second_moment = Tensor::new(shape.clone(), v)?;
    if amsgrad {
        state.max_second_moment = Tensor::new(shape, vmax)?;
    }
    state.step_count = t;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Tensor {
        Tensor::vector(x.to_vec()).unwrap()
    }

    #[test]
    fn sgd_examples() {
        let mut s = OptimizerState::sgd(0.2).unwrap();
        assert_eq!(sgd_step(&v(&[1.0]), &v(&[0.5]), &mut s).unwrap().data(), &[0.9]);
        assert_eq!(s.step_count(), 1);

        let mut s = OptimizerState::sgd(0.7).unwrap();
        assert_eq!(sgd_step(&v(&[1.5, -2.0]), &v(&[0.0, 0.0]), &mut s).unwrap().data(), &[1.5, -2.0]);

        let mut s = OptimizerState::sgd(1.0).unwrap();
        assert_eq!(sgd_step(&v(&[1.0, 2.0]), &v(&[1.0, 1.0]), &mut s).unwrap().data(), &[0.0, 1.0]);
        assert!(s.first_moment().is_empty());
    }

    #[test]
    fn sgd_errors() {
        let mut s = OptimizerState::sgd(0.1).unwrap();
        assert!(matches!(
            sgd_step(&v(&[1.0]), &v(&[1.0, 2.0]), &mut s),
            Err(Error::ShapeMismatch { .. })
        ));
        let mut a = OptimizerState::new(OptimizerKind::Adam, 0.1, &[1]).unwrap();
        assert!(sgd_step(&v(&[1.0]), &v(&[1.0]), &mut a).is_err());
        assert_eq!(s.step_count(), 0);
    }

    #[test]
    fn adam_first_step_hand_computed() {
        // m = 0.1, v = 0.001; m̂ = 1, v̂ = 1; update = 0.1 / (1 + 1e-8).
        let mut s = OptimizerState::new(OptimizerKind::Adam, 0.1, &[1]).unwrap();
        let out = adam_step(&v(&[0.0]), &v(&[1.0]), &mut s).unwrap();
        assert!((out.data()[0] + 0.1).abs() < 1e-7);
        assert!((s.first_moment().data()[0] - 0.1).abs() < 1e-15);
        assert!((s.second_moment().data()[0] - 0.001).abs() < 1e-15);
    }

    #[test]
    fn amsgrad_first_step_matches_adam() {
        let p = v(&[0.3, -1.2, 4.0]);
        let g = v(&[0.5, -2.0, 1e-3]);
        let mut a = OptimizerState::new(OptimizerKind::Adam, 0.05, &[3]).unwrap();
        let mut b = OptimizerState::new(OptimizerKind::AmsGrad, 0.05, &[3]).unwrap();
        assert_eq!(adam_step(&p, &g, &mut a).unwrap(), adam_step(&p, &g, &mut b).unwrap());
    }

    #[test]
    fn adam_zero_gradient_first_step_is_noop() {
        let mut s = OptimizerState::new(OptimizerKind::Adam, 0.1, &[2]).unwrap();
        let p = v(&[1.0, -3.0]);
        assert_eq!(adam_step(&p, &v(&[0.0, 0.0]), &mut s).unwrap(), p);
    }

    #[test]
    fn amsgrad_max_is_monotone_and_dominates_adam() {
        let mut a = OptimizerState::new(OptimizerKind::Adam, 0.01, &[2]).unwrap();
        let mut b = OptimizerState::new(OptimizerKind::AmsGrad, 0.01, &[2]).unwrap();
        let mut pa = v(&[0.0, 0.0]);
        let mut pb = pa.clone();
        let grads = [[5.0, 0.1], [0.1, 0.1], [0.0, 3.0], [0.2, 0.0], [1.0, 1.0]];
        let mut prev = b.max_second_moment().clone();
        for g in grads {
            let g = v(&g);
            pa = adam_step(&pa, &g, &mut a).unwrap();
            pb = adam_step(&pb, &g, &mut b).unwrap();
            let cur = b.max_second_moment().clone();
            for (x, y) in cur.data().iter().zip(prev.data()) {
                assert!(x >= y);
            }
            let ea = a.effective_second_moment().unwrap();
            let eb = b.effective_second_moment().unwrap();
            for (x, y) in eb.data().iter().zip(ea.data()) {
                assert!(x >= &(y * (1.0 - 1e-12)));
            }
            prev = cur;
        }
        assert_eq!(b.step_count(), 5);
    }

    #[test]
    fn reset_clears_moments() {
        let mut s = OptimizerState::new(OptimizerKind::AmsGrad, 0.1, &[1]).unwrap();
        adam_step(&v(&[0.0]), &v(&[1.0]), &mut s).unwrap();
        s.reset();
        assert_eq!(s.step_count(), 0);
        assert_eq!(s.first_moment().data(), &[0.0]);
        assert_eq!(s.max_second_moment().data(), &[0.0]);
    }
}
