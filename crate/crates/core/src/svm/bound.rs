//! Lower bound on the gap between projected positive and negative logits for
//! a binary SVM fitted on client class embeddings.
//!
//! With `N` clients contributing one positive and one negative embedding
//! each, all of them support vectors with equal dataset sizes, slacks
//! `ζ_n ≤ 1` and a test embedding `x*` with `hᵀx* ≥ 1 − ζ*`, `ζ* ≤ 1`:
//!
//! ```text
//! proj(logit⁺(x*), h) − proj(logit⁻(x*), h) ≥ [2N − Σ(ζ⁺_n + ζ⁻_n)](1 − ζ*) / (N‖h‖²)
//! ```
//!
//! The fitted bias cancels in the difference of the two aggregated
//! embeddings, so the check holds for biased fits as well.

use super::binary::{BinarySvmModel, ALPHA_TOL};
use crate::error::{Error, Result};
use crate::tensor::{dot, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

const HOLD_TOL: f64 = 1e-9;

/// `svm` must have been fitted on `pos` followed by `neg`; `weights[n]` is
/// client `n`'s dataset size.
pub fn verify_logit_bound(
    svm: &BinarySvmModel,
    pos: &[Tensor],
    neg: &[Tensor],
    weights: &[f64],
    test_embedding: &Tensor,
) -> Result<BoundCheck> {
    let n = pos.len();
    if n == 0 || neg.len() != n || weights.len() != n {
        return Err(Error::BoundPrecondition(format!(
            "need one positive and one negative embedding per client ({} / {} / {} given)",
            pos.len(),
            neg.len(),
            weights.len()
        )));
    }
    if svm.alphas.len() != 2 * n {
        return Err(Error::BoundPrecondition(format!(
            "svm was fitted on {} samples, expected {}",
            svm.alphas.len(),
            2 * n
        )));
    }
    let h = svm.normal.data();
    let h_sq = dot(h, h);
    if h_sq == 0.0 {
        return Err(Error::BoundPrecondition("zero hyperplane normal".into()));
    }
    if let Some(i) = svm.alphas.iter().position(|&a| a <= ALPHA_TOL) {
        return Err(Error::BoundPrecondition(format!("embedding {i} is not a support vector")));
    }
    if weights.iter().any(|&w| w != weights[0]) {
        return Err(Error::BoundPrecondition("clients have unequal dataset sizes".into()));
    }
    if let Some(i) = svm.slacks.iter().position(|&z| z > 1.0) {
        return Err(Error::BoundPrecondition(format!(
            "slack {} of embedding {i} exceeds 1",
            svm.slacks[i]
        )));
    }
    let h_x = dot(h, test_embedding.data());
    let test_slack = (1.0 - h_x).max(0.0);
    if test_slack > 1.0 {
        return Err(Error::BoundPrecondition(format!(
            "test embedding is not a good sample (hᵀx* = {h_x})"
        )));
    }

    let aggregate = |side: &[Tensor]| -> Vec<f64> {
        let total: f64 = weights.iter().sum();
        let mut acc = vec![0.0; h.len()];
        for (e, &w) in side.iter().zip(weights) {
            for (a, &v) in acc.iter_mut().zip(e.data()) {
                *a += w * v;
            }
        }
        acc.iter().map(|a| a / total).collect()
    };
    let h_norm = h_sq.sqrt();
    let project = |w: &[f64]| (dot(w, h) / h_norm) * (h_x / h_norm);
    let lhs = project(&aggregate(pos)) - project(&aggregate(neg));

    let slack_sum: f64 = svm.slacks.iter().sum();
    let rhs = (2.0 * n as f64 - slack_sum) * (1.0 - test_slack) / (n as f64 * h_sq);
    Ok(BoundCheck {
        lhs,
        rhs,
        holds: lhs >= rhs - HOLD_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svm::{fit_binary, SvmProblem};

    fn v(x: &[f64]) -> Tensor {
        Tensor::vector(x.to_vec()).unwrap()
    }

    fn square_fit() -> (BinarySvmModel, Vec<Tensor>, Vec<Tensor>) {
        // the two hulls are orthogonal segments, so every α is 1/4
        let pos = vec![v(&[1.0, 1.0, 0.0]), v(&[1.0, -1.0, 0.0])];
        let neg = vec![v(&[-1.0, 0.0, 1.0]), v(&[-1.0, 0.0, -1.0])];
        let data = pos.iter().chain(&neg).flat_map(|t| t.data().to_vec()).collect();
        let p = SvmProblem::unweighted(
            Tensor::matrix(4, 3, data).unwrap(),
            vec![1.0, 1.0, -1.0, -1.0],
            10.0,
        )
        .unwrap();
        (fit_binary(&p, 0, 1e-6).unwrap(), pos, neg)
    }

    #[test]
    fn separated_symmetric_instance() {
        let (svm, pos, neg) = square_fit();
        assert!(svm.alphas.iter().all(|a| (a - 0.25).abs() < 1e-9));
        let c = verify_logit_bound(&svm, &pos, &neg, &[1.0, 1.0], &v(&[1.0, 0.0, 0.0])).unwrap();
        // ‖h‖ = 1, N = 2: rhs = 4 / 2 = 2, lhs = (1 − (−1)) · 1 = 2
        assert!((c.rhs - 2.0).abs() < 1e-8);
        assert!((c.lhs - 2.0).abs() < 1e-8);
        assert!(c.holds);
    }

    #[test]
    fn test_slack_one_degenerates() {
        let (svm, pos, neg) = square_fit();
        let c = verify_logit_bound(&svm, &pos, &neg, &[1.0, 1.0], &v(&[0.0, 0.0, 0.0])).unwrap();
        assert_eq!(c.rhs, 0.0);
        assert!(c.holds);
    }

    #[test]
    fn preconditions_are_named() {
        let (svm, pos, neg) = square_fit();
        let e = verify_logit_bound(&svm, &pos, &neg, &[1.0, 2.0], &v(&[1.0, 0.0, 0.0])).unwrap_err();
        assert!(e.to_string().contains("unequal"));
        let e = verify_logit_bound(&svm, &pos, &neg, &[1.0, 1.0], &v(&[-1.0, 0.0, 0.0])).unwrap_err();
        assert!(e.to_string().contains("good sample"));
        let e = verify_logit_bound(&svm, &pos[..1], &neg, &[1.0, 1.0], &v(&[1.0, 0.0, 0.0])).unwrap_err();
        assert!(matches!(e, Error::BoundPrecondition(_)));
    }
}
