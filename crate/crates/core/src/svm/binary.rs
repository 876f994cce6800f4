use log::warn;

use crate::error::{Error, Result};
use crate::tensor::{dot, Tensor};

/// Dual coefficients at or below this are treated as zero.
pub const ALPHA_TOL: f64 = 1e-8;
/// Slack tolerance for complementary-slackness checks.
pub const SLACK_TOL: f64 = 1e-6;
/// Relative duality gap accepted as converged.
pub const DEFAULT_GAP_TOL: f64 = 1e-6;
/// KKT violation (`max_up y·g − min_low y·g`) below which sweeping stops early.
const KKT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmProblem {
    pub samples: Tensor,
    pub labels: Vec<f64>,
    /// Carried for weighted aggregation downstream, ignored by the fit.
    pub sample_weights: Vec<f64>,
    pub lambda: f64,
}

impl SvmProblem {
    pub fn new(samples: Tensor, labels: Vec<f64>, sample_weights: Vec<f64>, lambda: f64) -> Result<Self> {
        let p = Self {
            samples,
            labels,
            sample_weights,
            lambda,
        };
        p.validate()?;
        Ok(p)
    }

    /// Unit weights.
    pub fn unweighted(samples: Tensor, labels: Vec<f64>, lambda: f64) -> Result<Self> {
        let n = labels.len();
        Self::new(samples, labels, vec![1.0; n], lambda)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let m = self.labels.len();
        if self.samples.shape().len() != 2 || self.samples.rows() != m {
            return Err(Error::ShapeMismatch {
                expected: vec![m, self.samples.cols()],
                found: self.samples.shape().to_vec(),
            });
        }
        if m < 2 {
            return Err(Error::invalid("svm problem needs at least two samples"));
        }
        if self.labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::invalid("svm labels must be +1 or -1"));
        }
        if !self.labels.contains(&1.0) || !self.labels.contains(&-1.0) {
            return Err(Error::invalid("svm problem needs both labels present"));
        }
        if self.sample_weights.len() != m || self.sample_weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::invalid("sample weights must be positive, one per sample"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda {} must be positive", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvmModel {
    pub normal: Tensor,
    pub bias: f64,
    pub alphas: Vec<f64>,
    /// Indices with `α_i > ALPHA_TOL`, ascending.
    pub support_indices: Vec<usize>,
    pub slacks: Vec<f64>,
    pub primal_value: f64,
    pub dual_value: f64,
    /// `(primal − dual) / max(1, |primal|)`
    pub duality_gap: f64,
    pub lambda: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// Dual objective after each sweep.
    pub dual_trace: Vec<f64>,
}

impl BinarySvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(self.normal.data(), x) + self.bias
    }

    pub fn num_support_vectors(&self) -> usize {
        self.support_indices.len()
    }
}

/// `½‖w‖² + λ Σ max(0, 1 − y_i(wᵀx_i + b))`
pub fn primal_objective(problem: &SvmProblem, normal: &[f64], bias: f64) -> f64 {
    let hinge: f64 = (0..problem.len())
        .map(|i| (1.0 - problem.labels[i] * (dot(normal, problem.samples.row(i)) + bias)).max(0.0))
        .sum();
    0.5 * dot(normal, normal) + problem.lambda * hinge
}

/// Dual coordinate ascent with the bias constraint `Σ α_i y_i = 0`.
///
/// Because of that equality constraint the smallest feasible coordinate block
/// is a pair: each step maximizes the dual exactly along
/// `y_i e_i − y_j e_j` and clips to the box `[0, λ]`. Pairs are visited in a
/// fixed cyclic order `(0,1), (0,2), …, (M−2, M−1)`; one pass is a sweep.
/// `max_sweeps == 0` selects the default of `10·M`.
pub fn fit_binary(problem: &SvmProblem, max_sweeps: usize, tol: f64) -> Result<BinarySvmModel> {
    problem.validate()?;
    let m = problem.len();
    let d = problem.samples.cols();
    let x = &problem.samples;
    let y = &problem.labels;
    let lambda = problem.lambda;

    if (1..m).all(|i| x.row(i) == x.row(0)) {
        return Err(Error::DegenerateSvm("all samples are identical".into()));
    }

    let mut gram = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let v = dot(x.row(i), x.row(j));
            gram[i * m + j] = v;
            gram[j * m + i] = v;
        }
    }

    let max_sweeps = if max_sweeps == 0 { 10 * m } else { max_sweeps };
    let mut alpha = vec![0.0; m];
    // gradient of the dual objective: g = 1 − Q α with Q_ij = y_i y_j K_ij
    let mut grad = vec![1.0; m];
    let mut dual_trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < max_sweeps {
        sweeps += 1;
        for i in 0..m {
            for j in (i + 1)..m {
                pair_step(i, j, m, &gram, y, lambda, &mut alpha, &mut grad);
            }
        }
        dual_trace.push(dual_value(&alpha, &grad));
        let (up, low) = violation_bounds(&alpha, &grad, y, lambda);
        if up - low < KKT_TOL {
            let (normal, bias) = normal_and_bias(x, y, &alpha, &grad, lambda, d);
            let gap = relative_gap(problem, &normal, bias, &alpha);
            if gap < tol {
                converged = true;
                break;
            }
        }
    }

    let (normal, bias) = normal_and_bias(x, y, &alpha, &grad, lambda, d);
    let slacks: Vec<f64> = (0..m)
        .map(|i| (1.0 - y[i] * (dot(&normal, x.row(i)) + bias)).max(0.0))
        .collect();
    let primal_value = primal_objective(problem, &normal, bias);
    let dual_value = alpha.iter().sum::<f64>() - 0.5 * dot(&normal, &normal);
    let duality_gap = (primal_value - dual_value) / primal_value.abs().max(1.0);
    // Out of sweeps before the KKT violation closed, but the gap certificate
    // already holds.
    converged |= duality_gap < tol;
    if !converged {
        warn!("svm did not converge after {sweeps} sweeps (relative gap {duality_gap:.3e})");
    }
    let support_indices = (0..m).filter(|&i| alpha[i] > ALPHA_TOL).collect();

    Ok(BinarySvmModel {
        normal: Tensor::vector(normal)?,
        bias,
        alphas: alpha,
        support_indices,
        slacks,
        primal_value,
        dual_value,
        duality_gap,
        lambda,
        sweeps,
        converged,
        dual_trace,
    })
}

#[allow(clippy::too_many_arguments)]
fn pair_step(
    i: usize,
    j: usize,
    m: usize,
    gram: &[f64],
    y: &[f64],
    lambda: f64,
    alpha: &mut [f64],
    grad: &mut [f64],
) {
    let slope = y[i] * grad[i] - y[j] * grad[j];
    if slope == 0.0 {
        return;
    }
    let curvature = gram[i * m + i] + gram[j * m + j] - 2.0 * gram[i * m + j];

    // feasible interval for t with α_i += y_i t and α_j −= y_j t
    let (lo_i, hi_i) = if y[i] > 0.0 {
        (-alpha[i], lambda - alpha[i])
    } else {
        (alpha[i] - lambda, alpha[i])
    };
    let (lo_j, hi_j) = if y[j] > 0.0 {
        (alpha[j] - lambda, alpha[j])
    } else {
        (-alpha[j], lambda - alpha[j])
    };
    let lo = lo_i.max(lo_j);
    let hi = hi_i.min(hi_j);

    let unconstrained = if curvature > 1e-12 {
        slope / curvature
    } else if slope > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    let t = unconstrained.clamp(lo.min(0.0), hi.max(0.0));
    if t == 0.0 {
        return;
    }

    let da_i = y[i] * t;
    let da_j = -y[j] * t;
    alpha[i] = (alpha[i] + da_i).clamp(0.0, lambda);
    alpha[j] = (alpha[j] + da_j).clamp(0.0, lambda);
    for k in 0..m {
        let qki = y[k] * y[i] * gram[k * m + i];
        let qkj = y[k] * y[j] * gram[k * m + j];
        grad[k] -= qki * da_i + qkj * da_j;
    }
}

/// `½ αᵀ(1 + g)` equals `Σα − ½ αᵀQα` since `g = 1 − Qα`.
fn dual_value(alpha: &[f64], grad: &[f64]) -> f64 {
    0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (1.0 + g)).sum::<f64>()
}

/// `(max over I_up of y·g, min over I_low of y·g)`; optimal iff the first
/// does not exceed the second.
fn violation_bounds(alpha: &[f64], grad: &[f64], y: &[f64], lambda: f64) -> (f64, f64) {
    let mut up = f64::NEG_INFINITY;
    let mut low = f64::INFINITY;
    for i in 0..alpha.len() {
        let yg = y[i] * grad[i];
        let below_upper = alpha[i] < lambda;
        let above_lower = alpha[i] > 0.0;
        let in_up = (y[i] > 0.0 && below_upper) || (y[i] < 0.0 && above_lower);
        let in_low = (y[i] > 0.0 && above_lower) || (y[i] < 0.0 && below_upper);
        if in_up {
            up = up.max(yg);
        }
        if in_low {
            low = low.min(yg);
        }
    }
    (up, low)
}

/// Normal from the dual link `w = Σ α_i y_i x_i`; bias as the mean of
/// `y_i − wᵀx_i` over free support vectors, or the midpoint of the KKT
/// interval when none are free.
fn normal_and_bias(x: &Tensor, y: &[f64], alpha: &[f64], grad: &[f64], lambda: f64, d: usize) -> (Vec<f64>, f64) {
    let m = alpha.len();
    let mut normal = vec![0.0; d];
    for i in 0..m {
        if alpha[i] == 0.0 {
            continue;
        }
        let c = alpha[i] * y[i];
        for (w, &xv) in normal.iter_mut().zip(x.row(i)) {
            *w += c * xv;
        }
    }

    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    for i in 0..m {
        if alpha[i] > ALPHA_TOL && alpha[i] < lambda - ALPHA_TOL {
            free_sum += y[i] - dot(&normal, x.row(i));
            free_count += 1;
        }
    }
    let bias = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        let mut lower = f64::NEG_INFINITY;
        let mut upper = f64::INFINITY;
        for i in 0..m {
            let yg = y[i] * grad[i];
            let at_lower = alpha[i] <= ALPHA_TOL;
            // α = 0 needs y·f ≥ 1; α = λ needs y·f ≤ 1
            let bounds_below = (y[i] > 0.0) == at_lower;
            if bounds_below {
                lower = lower.max(yg);
            } else {
                upper = upper.min(yg);
            }
        }
        match (lower.is_finite(), upper.is_finite()) {
            (true, true) => 0.5 * (lower + upper),
            (true, false) => lower,
            (false, true) => upper,
            (false, false) => 0.0,
        }
    };
    (normal, bias)
}

fn relative_gap(problem: &SvmProblem, normal: &[f64], bias: f64, alpha: &[f64]) -> f64 {
    let p = primal_objective(problem, normal, bias);
    let dval = alpha.iter().sum::<f64>() - 0.5 * dot(normal, normal);
    (p - dval) / p.abs().max(1.0)
}
