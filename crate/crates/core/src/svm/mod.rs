//! Soft-margin linear SVM used as a second-level classifier over client
//! class embeddings.
//!
//! [`fit_binary`] solves the dual of
//! `min ½‖w‖² + λ Σ ζ_i  s.t.  y_i (wᵀx_i + b) ≥ 1 − ζ_i, ζ_i ≥ 0`
//! and [`fit_ovo`] fits one such problem per class pair.

mod binary;
mod bound;
mod ovo;

pub use binary::{
    fit_binary, primal_objective, BinarySvmModel, SvmProblem, ALPHA_TOL, DEFAULT_GAP_TOL, SLACK_TOL,
};
pub use bound::{verify_logit_bound, BoundCheck};
pub use ovo::{fit_ovo, ClassSample, OvoSvm, SupportVector};
